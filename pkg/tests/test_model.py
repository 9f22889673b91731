import numpy as np
import pytest

from rotbec.errors import Unstable
from rotbec.lattice import Field, Grid, inner, norm, normalized
from rotbec.model import (
    H0Action,
    HarmonicTrap,
    ModelSpec,
    QuarticTrap,
    RotationSpec,
    SampledTrap,
    angular_momentum_z,
    apply_h0,
    centrifugal_term,
    check_stability,
    lowest_eigenpairs,
)
from conftest import band_limited_field, noise_field


GRID2 = Grid((8.0, 8.0), (64, 64))


def oscillator_closed_form(omega, count):
    """Lowest levels of -Delta + r^2 - omega L_z from E = 2(2n_r+|m|+1) - omega m."""
    levels = sorted(
        2.0 * (2 * nr + abs(m) + 1) - omega * m
        for nr in range(12)
        for m in range(-12, 13)
    )
    return levels[:count]


def test_stability_harmonic_closed_form():
    trap = HarmonicTrap((1.0, 1.0))
    assert check_stability(trap, RotationSpec(1.5), GRID2).stable
    result = check_stability(trap, RotationSpec(2.5), GRID2)
    assert not result.stable
    assert result.witness is not None


def test_stability_quartic_any_omega():
    trap = QuarticTrap((1.0, 1.0), 0.5)
    for omega in (0.0, 2.5, 10.0):
        assert check_stability(trap, RotationSpec(omega), GRID2).stable


def test_stability_sampled_shell():
    V = GRID2.radius2_mesh.copy()
    trap = SampledTrap(V)
    assert check_stability(trap, RotationSpec(1.0), GRID2, margin=1e-9).stable
    assert not check_stability(trap, RotationSpec(2.5), GRID2).stable
    # flat potential confines in a periodic box when not rotating
    assert check_stability(SampledTrap(np.zeros(GRID2.shape)), RotationSpec(0.0), GRID2).stable


def test_modelspec_rejects_unstable():
    with pytest.raises(Unstable):
        ModelSpec(GRID2, HarmonicTrap((1.0, 1.0)), RotationSpec(2.5), 0.0)
    with pytest.raises(ValueError):
        ModelSpec(GRID2, HarmonicTrap((1.0, 1.0)), RotationSpec(0.0), -1.0)


def test_apply_h0_oscillator_ground_state_3d():
    grid = Grid((8.0,) * 3, (64,) * 3)
    spec = ModelSpec(grid, HarmonicTrap((1.0,) * 3), RotationSpec(0.0), 0.0)
    phi = Field(grid, np.pi ** (-0.75) * np.exp(-0.5 * grid.radius2_mesh).astype(complex))
    out = apply_h0(spec, phi)
    assert np.abs(out.values - 3.0 * phi.values).max() < 1e-8


def test_apply_h0_lz_eigenstate():
    spec = ModelSpec(GRID2, HarmonicTrap((1.0, 1.0)), RotationSpec(0.7), 0.0)
    spec0 = ModelSpec(GRID2, HarmonicTrap((1.0, 1.0)), RotationSpec(0.0), 0.0)
    x, y = GRID2.meshes
    phi = normalized(Field(GRID2, (x + 1j * y) * np.exp(-0.5 * GRID2.radius2_mesh)))
    with_rotation = apply_h0(spec, phi)
    without = apply_h0(spec0, phi)
    # winding-1 L_z eigenstate: the rotation term contributes -omega * phi
    assert np.abs(with_rotation.values - (without.values - 0.7 * phi.values)).max() < 1e-8


def test_apply_h0_constant_flat_trap():
    spec = ModelSpec(GRID2, SampledTrap(np.zeros(GRID2.shape)), RotationSpec(0.0), 0.0)
    phi = Field(GRID2, np.full(GRID2.shape, 0.125 + 0j))
    assert np.abs(apply_h0(spec, phi).values).max() < 1e-12


def test_lowest_eigenpairs_2d_oscillator():
    spec = ModelSpec(GRID2, HarmonicTrap((1.0, 1.0)), RotationSpec(0.0), 0.0)
    pairs = lowest_eigenpairs(spec, 3)
    want = oscillator_closed_form(0.0, 3)  # (2, 4, 4)
    for (e, _), w in zip(pairs, want):
        assert abs(e - w) < 1e-6
    # nondecreasing, orthonormal, small residual
    energies = [e for e, _ in pairs]
    assert energies == sorted(energies)
    for i in range(3):
        for j in range(3):
            ov = inner(pairs[i][1], pairs[j][1])
            assert abs(ov - (1.0 if i == j else 0.0)) < 1e-10
    action = H0Action(spec)
    for e, phi in pairs:
        resid = action.apply(phi.values) - e * phi.values
        assert np.linalg.norm(resid) * np.sqrt(GRID2.cell_volume) < 1e-8


def test_lowest_eigenpairs_rotating():
    spec = ModelSpec(GRID2, HarmonicTrap((1.0, 1.0)), RotationSpec(1.0), 0.0)
    pairs = lowest_eigenpairs(spec, 3)
    want = oscillator_closed_form(1.0, 3)  # (2, 3, 4)
    assert want == [2.0, 3.0, 4.0]
    for (e, _), w in zip(pairs, want):
        assert abs(e - w) < 1e-6


def test_ground_energy_matches_variational_oracle():
    from rotbec.gp import minimize_gp

    grid = Grid((7.0, 7.0), (32, 32))
    spec = ModelSpec(grid, HarmonicTrap((1.0, 0.8)), RotationSpec(0.4), 0.0)
    pairs = lowest_eigenpairs(spec, 1)
    rng = np.random.default_rng(11)
    starts = [noise_field(grid, rng) for _ in range(20)]
    variational = minimize_gp(spec, tol=1e-9, max_iter=4000, starts=starts)
    assert abs(pairs[0][0] - variational.energy) < 1e-6


def test_h0_hermitian():
    spec = ModelSpec(GRID2, HarmonicTrap((1.0, 1.0)), RotationSpec(0.9), 0.0)
    action = H0Action(spec)
    rng = np.random.default_rng(5)
    for _ in range(5):
        f = band_limited_field(GRID2, rng)
        h = band_limited_field(GRID2, rng)
        lhs = np.vdot(f, action.apply(h)) * GRID2.cell_volume
        rhs = np.vdot(action.apply(f), h) * GRID2.cell_volume
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def test_magnetic_form_identity():
    # -Delta - Omega.L = (-i grad - Omega^x/2)^2 - |Omega^x|^2/4 on the
    # grid interior (coordinate sawtooth pollutes the boundary shell)
    from rotbec.lattice import fftn, ifftn

    omega = 1.1
    spec = ModelSpec(GRID2, HarmonicTrap((1.0, 1.0)), RotationSpec(omega), 0.0)
    action = H0Action(spec)
    rng = np.random.default_rng(6)
    x, y = GRID2.meshes
    ax = 0.5 * omega * y
    ay = -0.5 * omega * x
    centri = centrifugal_term(spec.rotation, GRID2)
    interior = GRID2.radius2_mesh < (GRID2.half_widths[0] - 4 * GRID2.spacings[0]) ** 2
    env = np.exp(-0.5 * GRID2.radius2_mesh)
    for _ in range(3):
        # band-limited and confined: both sides differentiate coordinate
        # products, which alias for full-band fields
        f = band_limited_field(GRID2, rng, kcut=0.35) * env
        spectrum = fftn(f)
        lhs = ifftn(GRID2.k2_mesh * spectrum)
        dxf = ifftn(GRID2.ik_meshes[0] * spectrum)
        dyf = ifftn(GRID2.ik_meshes[1] * spectrum)
        lhs = lhs + 1j * (-omega * y) * dxf + 1j * (omega * x) * dyf  # -Omega.L part
        # divergence form of (-i grad + A)^2
        rhs = ifftn(GRID2.k2_mesh * spectrum)
        rhs = rhs - 1j * (ifftn(GRID2.ik_meshes[0] * fftn(ax * f))
                          + ifftn(GRID2.ik_meshes[1] * fftn(ay * f)))
        rhs = rhs - 1j * (ax * dxf + ay * dyf)
        rhs = rhs + (ax**2 + ay**2) * f - centri * f
        scale = np.linalg.norm(lhs[interior])
        assert np.linalg.norm((lhs - rhs)[interior]) < 1e-8 * max(1.0, scale)


def test_axisymmetric_quarter_turn_invariance():
    spec = ModelSpec(GRID2, HarmonicTrap((1.0, 1.0)), RotationSpec(0.8), 0.0)
    action = H0Action(spec)
    rng = np.random.default_rng(7)
    f = noise_field(GRID2, rng)
    f /= np.linalg.norm(f) * np.sqrt(GRID2.cell_volume)
    expect = np.vdot(f, action.apply(f)) * GRID2.cell_volume
    g = np.rot90(f)
    expect_rot = np.vdot(g, action.apply(g)) * GRID2.cell_volume
    assert abs(expect - expect_rot) < 1e-10 * max(1.0, abs(expect))


def test_angular_momentum_z_eigenstates():
    x, y = GRID2.meshes
    env = np.exp(-0.5 * GRID2.radius2_mesh)
    for m in (-2, -1, 0, 1, 2):
        base = (x + 1j * y) ** abs(m)
        if m < 0:
            base = np.conj(base)
        phi = normalized(Field(GRID2, base * env))
        assert abs(angular_momentum_z(phi) - m) < 1e-8
