"""Truncated-mode many-body cross-checks by exact diagonalization.

The second-quantized Hamiltonian on M one-particle modes,
H = sum_j e_j a+_j a_j + (1/2) sum_ijkl W_ijkl a+_i a+_j a_k a_l,
is diagonalized exactly in the N-boson occupation sector; the reduced
one-particle density matrix and condensate fraction come from the ground
vector.  The absolute (symmetry-unrestricted) ground state is computed on
the full N-fold tensor power of the mode space.  Coherent-state identities
are verified numerically on a truncated single-mode Fock space.
"""

import itertools
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, eigsh

from .errors import DimensionTooLarge, InvalidState, NoConvergence
from .lattice import fftn, ifftn
from .scatter import GaussianBump, scale_potential, scattering_length

_BASIS_CAP = 100_000


@dataclass(frozen=True)
class DeltaPair:
    """Grid-delta pair potential of strength 8 pi a (first-Born surrogate)."""

    a: float


@dataclass(frozen=True)
class FockProblem:
    M: int
    N: int
    e: tuple
    W: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "e", tuple(float(x) for x in self.e))
        W = np.asarray(self.W, dtype=complex)
        object.__setattr__(self, "W", W)
        if not 1 <= self.M <= 6:
            raise InvalidState("mode count must be between 1 and 6")
        if not 1 <= self.N <= 10:
            raise InvalidState("particle count must be between 1 and 10")
        if len(self.e) != self.M or W.shape != (self.M,) * 4:
            raise InvalidState("mode energies / tensor shape mismatch")
        if abs(W - W.transpose(1, 0, 3, 2)).max() > 1e-10:
            raise InvalidState("tensor must satisfy the pair-exchange symmetry")
        if abs(W - np.conj(W.transpose(2, 3, 0, 1))).max() > 1e-10:
            raise InvalidState("tensor must be Hermitian")
        if basis_dimension(self.M, self.N) > _BASIS_CAP:
            raise DimensionTooLarge(
                f"occupation basis exceeds {_BASIS_CAP} states"
            )


@dataclass
class FockResult:
    E0: float
    gamma1: np.ndarray
    condensate_fraction: float
    ground_vector_norm_residual: float


def basis_dimension(M, N):
    return math.comb(N + M - 1, M - 1)


def occupation_basis(M, N):
    """All occupation vectors with sum N, lexicographically ordered."""
    states = []
    for cuts in itertools.combinations(range(N + M - 1), M - 1):
        occ = []
        prev = -1
        for c in cuts:
            occ.append(c - prev - 1)
            prev = c
        occ.append(N + M - 2 - prev)
        states.append(tuple(occ))
    states.sort()
    return states


def _index_table(states, M, N):
    """Dense lookup from encoded occupation keys to basis indices."""
    base = N + 1
    table = -np.ones(base**M, dtype=np.int64)
    powers = base ** np.arange(M)
    occ = np.asarray(states, dtype=np.int64)
    keys = occ @ powers
    table[keys] = np.arange(len(states))
    return table, powers, occ


def assemble_hamiltonian(problem):
    """Sparse H in the fixed-N occupation basis."""
    M, N = problem.M, problem.N
    states = occupation_basis(M, N)
    dim = len(states)
    table, powers, occ = _index_table(states, M, N)
    e = np.asarray(problem.e)
    diag = occ @ e
    rows = [np.arange(dim)]
    cols = [np.arange(dim)]
    vals = [diag.astype(complex)]
    W = problem.W
    for i, j, k, l in itertools.product(range(M), repeat=4):
        w = W[i, j, k, l]
        if w == 0.0:
            continue
        nl = occ[:, l].astype(float)
        nk = occ[:, k] - (1.0 if k == l else 0.0)
        nj = occ[:, j] - (k == j) - (l == j) + 1.0
        ni = occ[:, i] - (k == i) - (l == i) + (i == j) + 1.0
        amp2 = nl * nk * nj * ni
        src = np.nonzero(amp2 > 0.0)[0]
        if src.size == 0:
            continue
        key_shift = powers[i] + powers[j] - powers[k] - powers[l]
        keys = (occ[src] @ powers) + key_shift
        dst = table[keys]
        rows.append(dst)
        cols.append(src)
        vals.append(0.5 * w * np.sqrt(amp2[src]))
    H = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    ).tocsr()
    return H, states


def _lowest_eigenpair(H, residual_tol=1e-8):
    dim = H.shape[0]
    if dim == 1:
        val = float(np.real(H[0, 0] if not sparse.issparse(H) else H.toarray()[0, 0]))
        return val, np.ones(1, dtype=complex), 0.0
    if dim <= 400:
        dense = H.toarray() if sparse.issparse(H) else np.asarray(H)
        vals, vecs = np.linalg.eigh(dense)
        v = vecs[:, 0]
        resid = float(np.linalg.norm(dense @ v - vals[0] * v))
        return float(vals[0]), v, resid
    vals, vecs = eigsh(H, k=1, which="SA", tol=1e-12, maxiter=20000)
    v = vecs[:, 0]
    resid = float(np.linalg.norm(H @ v - vals[0] * v))
    if resid > residual_tol:
        raise NoConvergence(f"ground-state residual {resid!r} above {residual_tol!r}")
    return float(vals[0]), v, resid


def reduced_density_matrix(states, vector, M, N):
    """gamma1[j, k] = <a+_k a_j> of the state in the occupation basis."""
    table, powers, occ = _index_table(states, M, N)
    gamma = np.zeros((M, M), dtype=complex)
    prob = np.abs(vector) ** 2
    for j in range(M):
        gamma[j, j] = float(prob @ occ[:, j])
        for k in range(M):
            if k == j:
                continue
            # <psi| a+_k a_j |psi>: annihilate from mode j, create in mode k
            src = np.nonzero(occ[:, j] > 0)[0]
            amp = np.sqrt(occ[src, j].astype(float) * (occ[src, k] + 1.0))
            keys = (occ[src] @ powers) - powers[j] + powers[k]
            dst = table[keys]
            gamma[j, k] = np.sum(np.conj(vector[dst]) * amp * vector[src])
    return gamma


def ground_state_bosonic(problem, residual_tol=1e-8):
    """Exact N-boson ground state of the truncated Hamiltonian."""
    H, states = assemble_hamiltonian(problem)
    energy, vector, resid = _lowest_eigenpair(H, residual_tol)
    gamma = reduced_density_matrix(states, vector, problem.M, problem.N)
    evals = np.linalg.eigvalsh(gamma)
    return FockResult(
        E0=energy,
        gamma1=gamma,
        condensate_fraction=float(evals[-1].real / problem.N),
        ground_vector_norm_residual=resid,
    )


def ground_state_absolute(problem, cap=10_000):
    """Lowest eigenvalue of sum_i h(i) + sum_{i<j} v(ij) on the full tensor power.

    No symmetry restriction: the variational space is (C^M)^(x N).
    """
    M, N = problem.M, problem.N
    dim = M**N
    if dim > cap:
        raise DimensionTooLarge(f"M^N = {dim} exceeds {cap}")
    e = np.asarray(problem.e)
    V = problem.W.reshape(M * M, M * M)
    pairs = list(itertools.combinations(range(N), 2))

    def matvec(v):
        t = v.reshape((M,) * N)
        out = np.zeros_like(t)
        for axis in range(N):  # one-body term is diagonal in the mode basis
            shape = [1] * N
            shape[axis] = M
            out += e.reshape(shape) * t
        for (p, q) in pairs:
            moved = np.moveaxis(t, (p, q), (0, 1)).reshape(M * M, -1)
            acted = V @ moved
            out += np.moveaxis(
                acted.reshape((M, M) + tuple(
                    s for a, s in enumerate(t.shape) if a not in (p, q)
                )),
                (0, 1), (p, q),
            )
        return out.reshape(-1)

    op = LinearOperator((dim, dim), matvec=matvec, dtype=complex)
    if dim <= 256:
        dense = np.column_stack([matvec(col) for col in np.eye(dim, dtype=complex)])
        vals = np.linalg.eigvalsh(dense)
        return float(vals[0])
    vals = eigsh(op, k=1, which="SA", tol=1e-12, return_eigenvectors=False,
                 maxiter=50000)
    return float(vals[0].real)


def unit_scattering_gaussian(width=1.0):
    """Repulsive Gaussian of the given width with scattering length 1.

    The amplitude is found by bisection; for widths around 1 the required
    amplitude exists because a grows monotonically from 0 with amplitude.
    """
    lo, hi = 1e-6, 4.0
    target = 1.0

    def f(amp):
        return scattering_length(GaussianBump(amp, width)) - target

    while f(hi) < 0:
        lo = hi
        hi *= 2.0
        if hi > 1e5:
            raise ValueError("width too small to reach scattering length 1")
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-14:
            break
    return GaussianBump(math.sqrt(lo * hi), width)


def _pair_kernel(grid, potential):
    """Pair potential sampled on the periodic displacement grid."""
    r2 = np.zeros(grid.shape)
    for axis in range(grid.dim):
        n = grid.points[axis]
        dx = grid.spacings[axis]
        L = grid.half_widths[axis]
        d = ((np.arange(n) * dx + L) % (2.0 * L)) - L
        shape = [1] * grid.dim
        shape[axis] = n
        r2 = r2 + d.reshape(shape) ** 2
    return potential.value(np.sqrt(r2))


def build_w_tensor(spec, modes, pair):
    """W[i,j,k,l] = <phi_i phi_j | v | phi_k phi_l> by grid quadrature.

    ``modes`` is a list of orthonormal fields; ``pair`` is a DeltaPair
    (contact surrogate of strength 8 pi a) or a radial potential from the
    scattering module.  The symmetry and Hermiticity of the tensor are
    enforced by averaging.
    """
    grid = spec.grid
    dV = grid.cell_volume
    M = len(modes)
    stack = np.stack([m.values for m in modes])
    if isinstance(pair, DeltaPair):
        strength = 8.0 * math.pi * pair.a
        prod = np.einsum("iX,kX->ikX", np.conj(stack.reshape(M, -1)), stack.reshape(M, -1))
        W = strength * dV * np.einsum("ikX,jlX->ijkl", prod, prod)
    else:
        kernel = _pair_kernel(grid, pair)
        kernel_hat = fftn(kernel.astype(complex))
        W = np.zeros((M, M, M, M), dtype=complex)
        pair_dens = {}
        for j in range(M):
            for l in range(M):
                g_jl = np.conj(stack[j]) * stack[l]
                conv = ifftn(kernel_hat * fftn(g_jl)) * dV
                pair_dens[(j, l)] = conv
        for i in range(M):
            for k in range(M):
                f_ik = np.conj(stack[i]) * stack[k]
                for j in range(M):
                    for l in range(M):
                        W[i, j, k, l] = np.sum(f_ik * pair_dens[(j, l)]) * dV
    W = 0.5 * (W + W.transpose(1, 0, 3, 2))
    W = 0.5 * (W + np.conj(W.transpose(2, 3, 0, 1)))
    return W


def truncated_gp_minimum(e, W_unit_g, restarts=24, seed=5, tol=1e-12, max_iter=4000):
    """min over unit vectors c of  c+ diag(e) c + (1/2) <cc|W|cc>.

    W_unit_g must already carry the GP coupling (delta tensor built at
    a = g), so the quartic term equals 4 pi g int |phi_c|^4.
    """
    e = np.asarray(e, dtype=float)
    M = e.size
    rng = np.random.default_rng(seed)
    best = None
    for attempt in range(restarts):
        if attempt == 0:
            c = np.zeros(M, dtype=complex)
            c[int(np.argmin(e))] = 1.0
        else:
            c = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        c /= np.linalg.norm(c)
        tau = 0.5
        energy = _coef_energy(c, e, W_unit_g)
        for _ in range(max_iter):
            grad = _coef_gradient(c, e, W_unit_g)
            mu = float(np.vdot(c, grad).real)
            res = grad - mu * c
            if np.linalg.norm(res) <= tol:
                break
            stepped = False
            while tau > 1e-18:
                cand = c - tau * res
                cand /= np.linalg.norm(cand)
                cand_energy = _coef_energy(cand, e, W_unit_g)
                if cand_energy <= energy:
                    c, energy = cand, cand_energy
                    tau *= 1.3
                    stepped = True
                    break
                tau *= 0.5
            if not stepped:
                break
        if best is None or energy < best:
            best = energy
    return float(best)


def _coef_energy(c, e, W):
    quart = 0.5 * np.einsum("i,j,k,l,ijkl->", np.conj(c), np.conj(c), c, c, W)
    return float((np.dot(e, np.abs(c) ** 2) + quart).real)


def _coef_gradient(c, e, W):
    cc = np.conj(c)
    t1 = 0.5 * np.einsum("j,k,l,pjkl->p", cc, c, c, W)
    t2 = 0.5 * np.einsum("i,k,l,ipkl->p", cc, c, c, W)
    return e * c + t1 + t2


@dataclass
class ScanRow:
    N: int
    a: float
    E0_over_N: float
    E_gp_truncated: float
    condensate_fraction: float
    E_abs: float = None


def gp_limit_scan(spec, M, g, N_list, pair_kind="delta", with_absolute=False,
                  modes=None):
    """E0(N, g/N)/N against the mode-truncated GP minimum for each N.

    ``pair_kind`` selects the interaction used to build W: "delta" for the
    contact surrogate of strength 8 pi a, or "gaussian" for the scaled
    unit-scattering-length Gaussian.
    """
    from .model import lowest_eigenpairs

    if any(N < 2 or N > 10 for N in N_list):
        raise InvalidState("N values must lie in [2, 10]")
    if modes is None:
        pairs = lowest_eigenpairs(spec, M)
    else:
        pairs = modes
    e = [p[0] for p in pairs]
    fields = [p[1] for p in pairs]
    W_gp = build_w_tensor(spec, fields, DeltaPair(g))
    e_gp = truncated_gp_minimum(e, W_gp)
    unit_gauss = unit_scattering_gaussian() if pair_kind == "gaussian" else None
    rows = []
    for N in N_list:
        a = g / N
        if pair_kind == "delta":
            W = build_w_tensor(spec, fields, DeltaPair(a))
        else:
            W = build_w_tensor(spec, fields, scale_potential(unit_gauss, a))
        problem = FockProblem(M, N, e, W)
        result = ground_state_bosonic(problem)
        e_abs = None
        if with_absolute and M**N <= 10_000:
            e_abs = ground_state_absolute(problem)
        rows.append(
            ScanRow(
                N=N,
                a=a,
                E0_over_N=result.E0 / N,
                E_gp_truncated=e_gp,
                condensate_fraction=result.condensate_fraction,
                E_abs=e_abs,
            )
        )
    return rows


@dataclass
class CoherentReport:
    annihilation_error: float
    number_error: float
    completeness_error: float
    upper_symbol_error: float
    shifted_number_error: float


def coherent_vector(z, D):
    """Components z^n exp(-|z|^2/2)/sqrt(n!) on the truncated Fock space."""
    n = np.arange(D)
    logmag = n * np.log(np.abs(z)) if z != 0 else np.where(n == 0, 0.0, -np.inf)
    logfact = np.cumsum(np.concatenate([[0.0], np.log(np.arange(1, D))]))
    mag = np.exp(logmag - 0.5 * logfact - 0.5 * abs(z) ** 2)
    phase = np.exp(1j * n * np.angle(z)) if z != 0 else np.ones(D)
    out = mag * phase
    if z == 0:
        out = np.zeros(D, dtype=complex)
        out[0] = 1.0
    return out


def annihilation_matrix(D):
    return np.diag(np.sqrt(np.arange(1, D)), k=1).astype(complex)


def coherent_state_checks(D=64, z=1 + 1j, Z=8.0, n_max=8,
                          radial_points=128, angular_points=256):
    """Numerical checks of the coherent-state identities.

    (i) <z|a|z> = z, (ii) <z|a+a|z> = |z|^2, (iii) the quadrature of
    |z><z| over |z| <= Z (measure dx dy / pi) is the identity on the span
    of the number states n <= n_max, (iv) the quadrature of
    (|z|^2 - 1)|z><z| reproduces a+a there.
    """
    if D < 32:
        raise ValueError("truncation must be at least 32")
    if abs(z) > Z / 4:
        raise ValueError("test amplitude must satisfy |z| <= Z/4")
    a_mat = annihilation_matrix(D)
    v = coherent_vector(z, D)
    lower_a = np.vdot(v, a_mat @ v)
    lower_n = np.vdot(v, (a_mat.conj().T @ a_mat) @ v)
    # polar quadrature: midpoint radially, uniform angles (exact for the
    # angular integral of the finitely many modes involved)
    dr = Z / radial_points
    r = (np.arange(radial_points) + 0.5) * dr
    th = 2.0 * np.pi * np.arange(angular_points) / angular_points
    zz = np.outer(r, np.exp(1j * th)).reshape(-1)
    wts = np.repeat(r * dr, angular_points) * (2.0 * np.pi / angular_points) / np.pi
    span = n_max + 1
    nn = np.arange(span)
    logfact = np.cumsum(np.concatenate([[0.0], np.log(np.arange(1, span))]))
    comps = (
        zz[None, :] ** nn[:, None]
        * np.exp(-0.5 * np.abs(zz) ** 2)[None, :]
        / np.exp(0.5 * logfact)[:, None]
    )
    overlap = (comps * wts[None, :]) @ np.conj(comps.T)
    completeness_error = float(np.linalg.norm(overlap - np.eye(span), 2))
    upper = (comps * ((np.abs(zz) ** 2 - 1.0) * wts)[None, :]) @ np.conj(comps.T)
    upper_symbol_error = float(np.linalg.norm(upper - np.diag(nn.astype(float)), 2))
    shifted = (comps * ((np.abs(zz) ** 2) * wts)[None, :]) @ np.conj(comps.T)
    shifted_number_error = float(
        np.linalg.norm(shifted - np.diag(nn + 1.0), 2)
    )
    return CoherentReport(
        annihilation_error=float(abs(lower_a - z)),
        number_error=float(abs(lower_n - abs(z) ** 2)),
        completeness_error=completeness_error,
        upper_symbol_error=upper_symbol_error,
        shifted_number_error=shifted_number_error,
    )
