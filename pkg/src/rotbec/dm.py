"""The density-matrix energy functional and its rank-constrained minimizer.

A rank-n state is a weighted orthonormal orbital family (lambda_i, phi_i)
with the weights on the simplex; its energy is
sum_i lambda_i <phi_i|H0|phi_i> + 4 pi g int rho^2 with
rho = sum_i lambda_i |phi_i|^2.  Restricting to rank one recovers the GP
functional.

The minimizer works in the square-root parameterization
gamma = sum_i |chi_i><chi_i| with one global constraint sum_i |chi_i|^2 = 1:
orthonormality and simplex constraints disappear, the energy becomes a
GP-like functional of the stacked fields, and the same trust-region engine
that minimizes the GP functional applies unchanged.  Weights and
orthonormal orbitals are recovered from the Gram spectrum of the stack,
followed by one exact weight update (the convex quadratic over the simplex,
solved by projected gradient), which can only lower the energy.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import fft as _fft

from .errors import InvalidState, NoConvergence
from .gp import _Flow, gaussian_envelope, vortex_seed
from .lattice import Field
from .model import H0Action

_ORTHO_TOL = 1e-10
_SIMPLEX_TOL = 1e-12


@dataclass
class DMState:
    orbitals: list = dc_field(repr=False)
    weights: np.ndarray = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def rank(self):
        return len(self.orbitals)

    def validate(self):
        n = self.rank
        if not 1 <= n <= 8:
            raise InvalidState(f"rank must be between 1 and 8, got {n}")
        if self.weights.shape != (n,):
            raise InvalidState("one weight per orbital required")
        if np.any(self.weights < -_SIMPLEX_TOL) or abs(self.weights.sum() - 1.0) > _SIMPLEX_TOL:
            raise InvalidState("weights must lie on the probability simplex")
        grid = self.orbitals[0].grid
        dV = grid.cell_volume
        for i in range(n):
            for j in range(i, n):
                ov = np.vdot(self.orbitals[i].values, self.orbitals[j].values) * dV
                want = 1.0 if i == j else 0.0
                if abs(ov - want) > _ORTHO_TOL:
                    raise InvalidState(f"orbitals {i},{j} not orthonormal: <i|j>={ov!r}")

    def density(self):
        rho = np.zeros(self.orbitals[0].grid.shape)
        for lam, phi in zip(self.weights, self.orbitals):
            rho += lam * (phi.values.real**2 + phi.values.imag**2)
        return rho


@dataclass
class DMResult:
    state: DMState
    energy: float
    residual: float
    iterations: int
    restarts_used: int
    orbital_energies: list = dc_field(default_factory=list)


def dm_energy(spec, state):
    """Energy of a rank-n density-matrix state (validates the state)."""
    state.validate()
    action = H0Action(spec)
    dV = spec.grid.cell_volume
    total = 0.0
    rho = np.zeros(spec.grid.shape)
    for lam, phi in zip(state.weights, state.orbitals):
        hphi = action.apply(phi.values)
        total += lam * float(np.vdot(phi.values, hphi).real) * dV
        rho += lam * (phi.values.real**2 + phi.values.imag**2)
    total += 4.0 * math.pi * spec.g * float(np.sum(rho * rho)) * dV
    return total


def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort algorithm)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho_idx = np.nonzero(u * np.arange(1, len(v) + 1) > css)[0][-1]
    theta = css[rho_idx] / float(rho_idx + 1)
    return np.maximum(v - theta, 0.0)


def minimize_weights(h, G, lam0, tol=1e-10, max_iter=200000):
    """Minimize h.lam + lam^T G lam over the simplex by projected gradient."""
    L = 2.0 * float(np.linalg.norm(G, 2)) + 1e-12 * (1.0 + float(np.linalg.norm(h)))
    step = 1.0 / L
    lam = project_simplex(np.asarray(lam0, dtype=float))
    for _ in range(max_iter):
        grad = h + 2.0 * (G @ lam)
        new = project_simplex(lam - step * grad)
        if float(np.linalg.norm(new - lam)) <= tol:
            return new
        lam = new
    return lam


class _StackFlow(_Flow):
    """Trust-region flow over n stacked fields with one shared norm."""

    def __init__(self, spec, n):
        super().__init__(spec)
        self.n = n
        self._axes = tuple(range(1, spec.grid.dim + 1))

    def _apply_h(self, a, spectrum=None):
        return self.action.apply_block(a, spectrum)

    def _forward(self, a):
        return _fft.fftn(a, axes=self._axes, workers=-1)

    def _inverse(self, a):
        return _fft.ifftn(a, axes=self._axes, workers=-1)

    def _density(self, psi):
        return np.sum(psi.real**2 + psi.imag**2, axis=0)

    def _density_rate(self, psi, d):
        return 2.0 * np.sum((np.conj(psi) * d).real, axis=0)


def _orthonormal_rows(rows, dV, grid, drop_tol=1e-8, rng=None):
    """Gram-Schmidt on stacked fields; degenerate rows become fresh noise."""
    out = []
    for v in rows:
        w = np.asarray(v, dtype=complex).copy()
        for u in out:
            w -= u * (np.vdot(u, w) * dV)
        nrm = float(np.linalg.norm(w)) * math.sqrt(dV)
        while nrm <= drop_tol:
            if rng is None:
                rng = np.random.default_rng(2**31 - 1)
            w = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
            w = w * gaussian_envelope(grid)
            for u in out:
                w -= u * (np.vdot(u, w) * dV)
            nrm = float(np.linalg.norm(w)) * math.sqrt(dV)
        out.append(w / nrm)
    return np.array(out)


def _extract_state(spec, stack):
    """Diagonalize the Gram matrix of the stack into (weights, orbitals)."""
    n = stack.shape[0]
    grid = spec.grid
    dV = grid.cell_volume
    flat = stack.reshape(n, -1)
    gram = (flat @ np.conj(flat.T)) * dV  # gram[i,j] = <chi_j|chi_i>
    vals, vecs = np.linalg.eigh(0.5 * (gram + np.conj(gram.T)))
    order = np.argsort(vals)[::-1]
    vals = np.maximum(vals[order].real, 0.0)
    vecs = vecs[:, order]
    mixed = (vecs.conj().T @ flat).reshape((n,) + grid.shape)
    lam = vals / vals.sum()
    orbitals = []
    for k in range(n):
        nrm = float(np.linalg.norm(mixed[k])) * math.sqrt(dV)
        orbitals.append(mixed[k] / nrm if nrm > 1e-8 else mixed[k])
    # zero-weight rows carry no direction; re-orthonormalize the family so
    # the returned orbitals are a valid frame and the rank can re-grow
    block = _orthonormal_rows(orbitals, dV, grid)
    return lam, block


def _dm_starts(grid, n, restarts, seed, seed_fields):
    rng = np.random.default_rng(seed)
    starts = []
    env = gaussian_envelope(grid)
    if seed_fields:
        base = [np.asarray(f.values if isinstance(f, Field) else f, dtype=complex)
                for f in seed_fields[:n]]
        while len(base) < n:
            # small noise so the flow can grow rank away from the seed
            noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
            base.append(1e-3 * noise * env)
        starts.append(np.stack(base))
    vort = np.stack([vortex_seed(grid, q) for q in range(n)]) if n > 1 else \
        vortex_seed(grid, 0)[None]
    starts.append(vort)
    for _ in range(restarts):
        noise = rng.standard_normal((n,) + grid.shape) + 1j * rng.standard_normal((n,) + grid.shape)
        starts.append(noise * env[None])
    return starts


def minimize_dm(spec, n, tol=1e-7, max_iter=40000, restarts=2, seed=0,
                seed_fields=None, starts=None):
    """Best rank-n minimizer over restarts; returns a DMResult.

    ``seed_fields`` (optional) is a list of fields used to build the first
    restart, e.g. a GP minimizer to guarantee E_DM <= E_GP, or the
    orbitals of a lower-rank solution.  ``starts`` replaces the whole
    start list with explicit (n,)+grid stacks.
    """
    if not 1 <= n <= 8:
        raise InvalidState(f"rank must be between 1 and 8, got {n}")
    flow = _StackFlow(spec, n)
    action = H0Action(spec)
    dV = spec.grid.cell_volume
    best = None
    attempted = 0
    total_iters = 0
    if starts is None:
        starts = _dm_starts(spec.grid, n, restarts, seed, seed_fields)
    for start in starts:
        attempted += 1
        stack, resnorm, iters, ok = flow.descend(start, tol, max_iter)
        total_iters += iters
        if not ok:
            continue
        lam, block = _extract_state(spec, stack)
        # exact weight update with orbitals fixed; never increases energy
        h0block = action.apply_block(block)
        h = np.array([float(np.vdot(block[i], h0block[i]).real) * dV for i in range(n)])
        dens = block.real**2 + block.imag**2
        gmat = (4.0 * math.pi * spec.g * dV) * (dens.reshape(n, -1) @ dens.reshape(n, -1).T)
        energy_before = float(lam @ h + lam @ gmat @ lam)
        lam2 = minimize_weights(h, gmat, lam)
        energy = float(lam2 @ h + lam2 @ gmat @ lam2)
        if energy > energy_before + 1e-11 * max(1.0, abs(energy_before)):
            raise AssertionError("weight update increased the energy")
        if best is None or energy < best[0]:
            best = (energy, block, lam2, resnorm, h)
    if best is None:
        raise NoConvergence(
            f"no restart reached residual {tol!r} within {max_iter} iterations",
            iterations=max_iter,
        )
    energy, block, lam, resnorm, h = best
    order = np.argsort(-lam)
    state = DMState(
        orbitals=[Field(spec.grid, block[i].copy()) for i in order],
        weights=lam[order],
    )
    return DMResult(
        state=state,
        energy=energy,
        residual=resnorm,
        iterations=total_iters,
        restarts_used=attempted,
        orbital_energies=[h[i] for i in order],
    )
