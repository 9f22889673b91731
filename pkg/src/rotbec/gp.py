"""The Gross-Pitaevskii energy functional and its constrained minimization.

The energy of a unit-norm field is  <phi|H0|phi> + 4 pi g int |phi|^4,
minimized over the unit sphere of L2 by a normalized gradient flow whose
steps come from trust-region Newton subproblems (Steihaug-CG with a
kinetic preconditioner); accepted iterates never increase the energy
while energy differences are resolvable in double precision.  Restarts
start from complex Gaussian noise under a Gaussian envelope plus
deterministic vortex-seeded profiles (x+iy)^q exp(-|x|^2/2), q = 0..3,
and every converged restart is retained so degenerate minimizer families
can be reported.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import NoConvergence, NotNormalized, Unstable
from .lattice import Field, fftn, ifftn
from .model import H0Action, check_stability

_NORM_TOL = 1e-8


@dataclass(frozen=True)
class GPBreakdown:
    kinetic: float
    potential: float
    rotational: float
    interaction: float

    @property
    def total(self):
        return self.kinetic + self.potential + self.rotational + self.interaction


@dataclass
class GPResult:
    phi: Field = dc_field(repr=False)
    energy: float = 0.0
    mu: float = 0.0
    breakdown: GPBreakdown = None
    residual: float = 0.0
    iterations: int = 0
    restarts_used: int = 0

    def density(self):
        v = self.phi.values
        return v.real**2 + v.imag**2


def _require_normalized(phi):
    nrm = float(np.linalg.norm(phi.values)) * math.sqrt(phi.grid.cell_volume)
    if abs(nrm - 1.0) > _NORM_TOL:
        raise NotNormalized(f"|phi|_2 = {nrm!r}, expected 1")


def gp_energy(spec, phi):
    """Term-by-term energy of a unit-norm field."""
    _require_normalized(phi)
    action = H0Action(spec)
    spectrum = fftn(phi.values)
    kinetic, potential, rotational = action.energy_parts(phi.values, spectrum)
    if action.rot_coeffs is not None:
        # the rotational expectation must be real for the Hermitian operator
        imag = _rotational_imag(action, phi.values, spectrum)
        if abs(imag) > 1e-10:
            raise ValueError(f"rotational term has imaginary part {imag!r}")
    dens = phi.values.real**2 + phi.values.imag**2
    interaction = 4.0 * math.pi * spec.g * float(np.sum(dens**2)) * spec.grid.cell_volume
    return GPBreakdown(kinetic, potential, rotational, interaction)


def _rotational_imag(action, values, spectrum):
    acc = 0.0
    for axis, coeff in enumerate(action.rot_coeffs):
        if coeff is None:
            continue
        dphi = ifftn(action.ik[axis] * spectrum)
        acc += float(np.sum(coeff * (np.conj(values) * dphi).real))
    return acc * action.grid.cell_volume


def gp_gradient(spec, phi):
    """Unconstrained functional derivative H0 phi + 8 pi g |phi|^2 phi."""
    action = H0Action(spec)
    out = action.apply(phi.values)
    if spec.g:
        dens = phi.values.real**2 + phi.values.imag**2
        out += (8.0 * math.pi * spec.g) * dens * phi.values
    return Field(spec.grid, out)


def chemical_potential(spec, phi):
    """mu = E[phi] + 4 pi g int |phi|^4."""
    parts = gp_energy(spec, phi)
    return parts.total + parts.interaction


@dataclass
class _State:
    psi: np.ndarray
    energy: float
    e_h0: float
    mu: float
    dens: np.ndarray
    res: np.ndarray
    resnorm: float


class _Flow:
    """Array-level descent state for one model spec.

    The same trust-region engine also drives the rank-n density-matrix
    minimizer: the hooks below (transform, operator, density) are the only
    places that know whether the state is a single field or a stack of
    them sharing one global norm constraint.
    """

    def __init__(self, spec):
        self.spec = spec
        self.action = H0Action(spec)
        self.grid = spec.grid
        self.dV = spec.grid.cell_volume
        self.coeff = 8.0 * math.pi * spec.g
        self.k2 = spec.grid.k2_mesh

    def _apply_h(self, a, spectrum=None):
        return self.action.apply(a, spectrum)

    def _forward(self, a):
        return fftn(a)

    def _inverse(self, a):
        return ifftn(a)

    def _density(self, psi):
        return psi.real**2 + psi.imag**2

    def _density_rate(self, psi, d):
        return 2.0 * (np.conj(psi) * d).real

    def normalize(self, psi):
        return psi / (np.linalg.norm(psi) * math.sqrt(self.dV))

    def evaluate(self, psi):
        """Energy, chemical potential and sphere residual of a unit-norm array."""
        spectrum = self._forward(psi)
        hpsi = self._apply_h(psi, spectrum)
        dens = self._density(psi)
        e_h0 = float(np.vdot(psi, hpsi).real) * self.dV
        e_int = 0.5 * self.coeff * float(np.sum(dens * dens)) * self.dV
        grad = hpsi + self.coeff * dens * psi if self.coeff else hpsi
        mu = float(np.vdot(psi, grad).real) * self.dV
        res = grad - mu * psi
        resnorm = float(np.linalg.norm(res)) * math.sqrt(self.dV)
        return _State(psi, e_h0 + e_int, e_h0, mu, dens, res, resnorm)

    def precondition(self, res, mu):
        return self._inverse(self._forward(res) / (max(1.0, abs(mu)) + self.k2))

    def hessian_apply(self, st, d, hd=None):
        """Second-variation operator of the energy at st (tangent-projected).

        Real-linear: it couples d and conj(d) through the interaction, so
        all Krylov loops below run in the real inner product Re<.,.>.
        """
        if hd is None:
            hd = self._apply_h(d)
        out = hd - st.mu * d
        if self.coeff:
            out = out + self.coeff * (st.dens * d + self._density_rate(st.psi, d) * st.psi)
        out = out - st.psi * (np.vdot(st.psi, out) * self.dV)
        return out

    def _tangent(self, st, v):
        return v - st.psi * (np.vdot(st.psi, v) * self.dV)

    def _dot(self, a, b):
        return float(np.vdot(a, b).real) * self.dV

    def _subproblem(self, st, radius, cap, rel_tol):
        """Steihaug-CG on the trust-region model around st.

        Minimizes m(x) = 2<res,x> + <x,(H+sigma)x> over |x| <= radius; the
        small shift sigma ~ |res| regularizes the exact zero mode of
        axisymmetric problems (rigid rotation of a vortex configuration).
        Returns (step, predicted model decrease, hit_boundary, applies).
        """
        g = st.res
        sigma = st.resnorm
        x = np.zeros_like(g)
        xn2 = 0.0
        r = g.copy()
        z = self._tangent(st, self.precondition(r, st.mu))
        d = -z
        rz = self._dot(r, z)
        gnorm2 = self._dot(g, g)
        inner = 0
        hit = False

        def boundary_point(x, d, xn2):
            dd = self._dot(d, d)
            xd = self._dot(x, d)
            tau = (-xd + math.sqrt(max(xd * xd + dd * (radius * radius - xn2), 0.0))) / dd
            return x + tau * d

        for _ in range(cap):
            jd = self.hessian_apply(st, d) + sigma * d
            inner += 1
            djd = self._dot(d, jd)
            if djd <= 0.0:
                x = boundary_point(x, d, xn2)
                hit = True
                break
            alpha = rz / djd
            xn = x + alpha * d
            xn_norm2 = self._dot(xn, xn)
            if xn_norm2 >= radius * radius:
                x = boundary_point(x, d, xn2)
                hit = True
                break
            x, xn2 = xn, xn_norm2
            r = r + alpha * jd
            if self._dot(r, r) <= rel_tol * rel_tol * gnorm2:
                break
            z = self._tangent(st, self.precondition(r, st.mu))
            rz_new = self._dot(r, z)
            d = -z + (rz_new / rz) * d
            rz = rz_new
        if hit:
            # r is stale after a boundary step; recompute the model value
            jx = self.hessian_apply(st, x) + sigma * x
            inner += 1
            predicted = 2.0 * self._dot(g, x) + self._dot(x, jx)
        else:
            predicted = self._dot(g, x) + self._dot(x, r)
        return x, predicted, hit, inner

    def descend(self, psi0, tol, max_iter):
        """Minimize over the unit sphere; returns (psi, res, iters, ok).

        Trust-region Newton (Steihaug-CG subproblems, kinetic
        preconditioner, normalize-retraction): plain gradient flows crawl
        on the soft vortex-position modes of rotating states, while the
        trust region exploits the same flat or negative curvature to ride
        valleys quickly and still guarantees nonincreasing energies.  Once
        predicted decreases drop below the double-precision rounding floor,
        steps are judged by residual decrease instead, which is the only
        signal left at that scale.  ``iters`` counts operator applications.
        """
        st = self.evaluate(self.normalize(psi0.astype(complex)))
        iters = 1
        best = st
        radius = 0.5
        fails = 0
        while st.resnorm > tol and iters < max_iter:
            rel_tol = min(0.1, math.sqrt(st.resnorm))
            step, predicted, hit, inner = self._subproblem(
                st, radius, cap=min(150, max(10, max_iter - iters)), rel_tol=rel_tol
            )
            iters += inner
            if predicted >= 0.0:
                break  # no descent left in the model
            cand = self.evaluate(self.normalize(st.psi + step))
            iters += 1
            noise_floor = 5e-15 * max(1.0, abs(st.energy))
            if -predicted > noise_floor:
                rho = (cand.energy - st.energy) / predicted
                accepted = cand.energy <= st.energy
                if rho < 0.25:
                    radius = max(radius * 0.25, 1e-14)
                elif rho > 0.75 and hit:
                    radius = min(radius * 2.0, 16.0)
            else:
                accepted = cand.resnorm <= st.resnorm
                if not accepted:
                    radius = max(radius * 0.25, 1e-14)
                elif hit:
                    radius = min(radius * 2.0, 16.0)
            if accepted:
                st = cand
                if st.resnorm < best.resnorm:
                    best = st
                fails = 0
            else:
                fails += 1
                if fails >= 30:
                    break
        if st.resnorm > best.resnorm:
            st = best
        return st.psi, st.resnorm, iters, st.resnorm <= tol


def gaussian_envelope(grid):
    return np.exp(-0.5 * grid.radius2_mesh)


def vortex_seed(grid, q):
    """(x + i y)^q exp(-|x|^2/2) as a raw array; q = 0 is the plain Gaussian."""
    x, y = grid.meshes[0], grid.meshes[1]
    return (x + 1j * y) ** q * gaussian_envelope(grid) if q else gaussian_envelope(grid).astype(complex)


def _starting_fields(grid, restarts, seed):
    rng = np.random.default_rng(seed)
    starts = [vortex_seed(grid, q) for q in range(4)]
    env = gaussian_envelope(grid)
    for _ in range(restarts):
        noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        starts.append(noise * env)
    return starts


def minimize_gp_family(spec, tol=1e-8, max_iter=200000, restarts=4, seed=0,
                       starts=None):
    """All converged restarts sorted by energy (best first)."""
    stability = check_stability(spec.trap, spec.rotation, spec.grid)
    if not stability:
        raise Unstable("cannot minimize on an unstable model", stability.witness)
    flow = _Flow(spec)
    if starts is None:
        starts = _starting_fields(spec.grid, restarts, seed)
    results = []
    attempted = 0
    for psi0 in starts:
        attempted += 1
        psi, resnorm, iters, ok = flow.descend(np.asarray(psi0), tol, max_iter)
        if not ok:
            continue
        phi = Field(spec.grid, psi)
        parts = gp_energy(spec, phi)
        results.append(
            GPResult(
                phi=phi,
                energy=parts.total,
                mu=parts.total + parts.interaction,
                breakdown=parts,
                residual=resnorm,
                iterations=iters,
                restarts_used=attempted,
            )
        )
    if not results:
        raise NoConvergence(
            f"no restart reached residual {tol!r} within {max_iter} iterations",
            iterations=max_iter,
        )
    results.sort(key=lambda r: r.energy)
    for r in results:
        r.restarts_used = attempted
    return results


def minimize_gp(spec, tol=1e-8, max_iter=200000, restarts=4, seed=0, starts=None):
    """Best minimizer over all restarts (see minimize_gp_family)."""
    return minimize_gp_family(spec, tol, max_iter, restarts, seed, starts)[0]
