"""Finite-volume corrector problems and the homogenized-coefficient estimators.

All systems share one discrete operator: at a site z,

    (L_omega phi)(z) = sum over neighbors z' of omega_(z,z') (phi(z) - phi(z')),

which is symmetric positive semidefinite. The right-hand side is the local
drift d(z) = sum_i xi_i (omega_(z,z+e_i) - omega_(z-e_i,z)). Three flavors:

* Dirichlet: solve on Q_N with phi = 0 outside; energy average over Q_N.
* Regularized + filtered: (mu + L_omega) phi = d on Q_N, same exterior; the
  energy is averaged against a mask eta_L on a centered window Q_L.
* Periodic: solve on the discrete torus (mu = 0 handled in the zero-mean
  subspace); energy average over one cell.

Solves are matrix-free conjugate gradient with Jacobi preconditioning over a
precomputed edge list (see _kernels.cg_edge_list); assembly is plain numpy on
the environment's edge tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np

from . import _kernels
from .environment import BoxEnvironment, EdgeId, PeriodicEnvironment, conductance
from .errors import ConfigurationError, SolverError

__all__ = [
    "CorrectorField", "Mask", "EstimateSample",
    "local_drift", "solve_dirichlet", "estimate_dirichlet",
    "make_mask", "estimate_regularized",
    "solve_periodic", "estimate_periodic", "cg_solve",
    "default_filter_side", "default_mu", "unit_vector",
]

DEFAULT_TOL = 1e-10


def default_filter_side(N: int) -> int:
    """The default filtering window side L = floor(4N/5)."""
    return (4 * N) // 5


def default_mu(N: int) -> float:
    """The default zero-order regularization mu = 125 / N^(3/2)."""
    return 125.0 / N**1.5


def unit_vector(d: int, axis: int = 0) -> np.ndarray:
    xi = np.zeros(d)
    xi[axis] = 1.0
    return xi


def _iter_cap(N: int, d: int) -> int:
    return int(math.ceil(50.0 * N ** (d / 2.0)))


@dataclass
class CorrectorField:
    """Solution of one corrector system, plus solver diagnostics."""

    N: int
    d: int
    xi: np.ndarray
    values: np.ndarray  # shape (N,)*d
    kind: str           # "dirichlet" | "regularized" | "periodic"
    mu: float = 0.0
    iterations: int = 0
    residual: float = 0.0


@dataclass
class Mask:
    """Normalized averaging weights eta_L on Q_L (sum exactly 1)."""

    L: int
    d: int
    weights: np.ndarray
    shape: str  # "affine" | "flat"


@dataclass
class EstimateSample:
    """One realization of a xi.A xi estimator."""

    method: str
    N: int
    mu: float
    L: int
    xi: np.ndarray
    seed: object
    value: float
    iterations: int = 0
    residual: float = 0.0


def local_drift(env, z, xi) -> float:
    """The drift sum_i xi_i (omega_(z,z+e_i) - omega_(z-e_i,z)) at a site."""
    z = tuple(int(c) for c in z)
    d = len(z)
    total = 0.0
    for i in range(d):
        if xi[i] == 0.0:
            continue
        fwd = conductance(env, EdgeId(z, i))
        back = tuple(c - 1 if j == i else c for j, c in enumerate(z))
        bwd = conductance(env, EdgeId(back, i))
        total += xi[i] * (fwd - bwd)
    return total


@lru_cache(maxsize=32)
def _edge_index(N: int, d: int, periodic: bool):
    """Site-index pairs (ia, ib) of the coupled edges, concatenated by axis.

    For the box case only interior edges appear (boundary edges touch the
    zero exterior and contribute to the diagonal alone); for the torus every
    edge couples, with the forward neighbor wrapping.
    """
    grid = np.arange(N**d, dtype=np.int64).reshape((N,) * d)
    ia, ib = [], []
    for i in range(d):
        if periodic:
            ia.append(grid.ravel())
            ib.append(np.roll(grid, -1, axis=i).ravel())
        else:
            sl_a = [slice(None)] * d
            sl_a[i] = slice(None, -1)
            sl_b = [slice(None)] * d
            sl_b[i] = slice(1, None)
            ia.append(grid[tuple(sl_a)].ravel())
            ib.append(grid[tuple(sl_b)].ravel())
    return np.ascontiguousarray(np.concatenate(ia)), np.ascontiguousarray(np.concatenate(ib))


def _box_arrays(env: BoxEnvironment, xi):
    """diag, drift, and interior edge weights for the zero-exterior box system."""
    N, d = env.N, env.d
    diag = np.zeros((N,) * d)
    drift = np.zeros((N,) * d)
    wparts = []
    for i in range(d):
        fwd = env.forward_table(i)
        bwd = env.backward_table(i)
        diag += fwd + bwd
        if xi[i] != 0.0:
            drift += xi[i] * (fwd - bwd)
        sl = [slice(None)] * d
        sl[i] = slice(None, -1)
        wparts.append(fwd[tuple(sl)].ravel())
    return diag.ravel(), drift.ravel(), np.ascontiguousarray(np.concatenate(wparts))


def _torus_arrays(env: PeriodicEnvironment, xi):
    N, d = env.N, env.d
    diag = np.zeros((N,) * d)
    drift = np.zeros((N,) * d)
    wparts = []
    for i in range(d):
        fwd = env.tables[i]
        bwd = np.roll(fwd, 1, axis=i)
        diag += fwd + bwd
        if xi[i] != 0.0:
            drift += xi[i] * (fwd - bwd)
        wparts.append(fwd.ravel())
    return diag.ravel(), drift.ravel(), np.ascontiguousarray(np.concatenate(wparts))


def _check_xi(xi, d) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (d,):
        raise ConfigurationError(f"xi must have shape ({d},), got {xi.shape}")
    return xi


def _solve_box(env: BoxEnvironment, xi, mu: float, tol: float) -> CorrectorField:
    N, d = env.N, env.d
    xi = _check_xi(xi, d)
    diag, drift, we = _box_arrays(env, xi)
    ia, ib = _edge_index(N, d, periodic=False)
    x, relres, iters = _kernels.cg_edge_list(ia, ib, we, diag + mu, drift,
                                             tol, _iter_cap(N, d), False)
    if iters < 0:
        raise SolverError(f"box corrector solve did not converge (N={N}, d={d})",
                          relres, -iters)
    kind = "dirichlet" if mu == 0.0 else "regularized"
    return CorrectorField(N, d, xi, x.reshape((N,) * d), kind, mu, iters, relres)


def solve_dirichlet(env: BoxEnvironment, N: int, xi, tol: float = DEFAULT_TOL) -> CorrectorField:
    """Corrector with zero Dirichlet exterior on Q_N."""
    if N != env.N:
        raise ConfigurationError(f"environment covers N={env.N}, requested N={N}")
    return _solve_box(env, xi, 0.0, tol)


def _dirichlet_energy(env: BoxEnvironment, field: CorrectorField) -> float:
    """Average over Q_N of (xi + grad phi) . A (xi + grad phi), zero extension."""
    N, d = env.N, env.d
    phi = field.values
    padded = np.pad(phi, [(0, 1)] * d)
    total = 0.0
    for i in range(d):
        sl = [slice(None, N)] * d
        sl[i] = slice(1, N + 1)
        grad = padded[tuple(sl)] - phi
        total += float(np.sum(env.forward_table(i) * (field.xi[i] + grad) ** 2))
    return total / N**d


def estimate_dirichlet(env: BoxEnvironment, N: int, xi,
                       tol: float = DEFAULT_TOL) -> EstimateSample:
    field = solve_dirichlet(env, N, xi, tol)
    value = _dirichlet_energy(env, field)
    return EstimateSample("dirichlet", N, 0.0, N, field.xi, env.seed, value,
                          field.iterations, field.residual)


def make_mask(N: int, L: int, shape: str = "affine", d: int = 2,
              plateau_fraction: float = 0.5) -> Mask:
    """Averaging mask eta_L on Q_L, normalized to unit sum.

    "affine" is a tensor product of trapezoids: 1 on the middle
    plateau_fraction of [0, L), affine ramps to 0 at the edges, sampled at
    cell centers. "flat" is uniform. Dimension mismatches are caught by
    estimate_regularized, which checks the mask against the environment.
    """
    if not 0 < L <= N:
        raise ConfigurationError(f"need 0 < L <= N, got L={L}, N={N}")
    if shape == "flat":
        prof = np.full(L, 1.0 / L)
    elif shape == "affine":
        if not 0 < plateau_fraction <= 1:
            raise ConfigurationError("plateau_fraction must lie in (0, 1]")
        x = np.arange(L) + 0.5
        ramp = 0.5 * (1.0 - plateau_fraction) * L
        prof = np.clip(np.minimum(x, L - x) / ramp, 0.0, 1.0) if ramp > 0 else np.ones(L)
        prof = prof / prof.sum()
    else:
        raise ConfigurationError(f"unknown mask shape {shape!r}")
    w = reduce(np.multiply.outer, [prof] * d) if d > 1 else prof.copy()
    return Mask(L, d, w / w.sum(), shape)


def estimate_regularized(env: BoxEnvironment, N: int, L: int, mu: float,
                         mask, xi, tol: float = DEFAULT_TOL) -> EstimateSample:
    """Regularized corrector + filtered energy average on a centered Q_L.

    Solves (mu + L_omega) phi = drift with zero exterior, then averages
    (xi + grad phi) . A (xi + grad phi) against the mask placed at offset
    (N - L) // 2 along every axis.
    """
    if mu <= 0.0:
        raise ConfigurationError(f"mu must be positive, got {mu}")
    if not 0 < L <= N:
        raise ConfigurationError(f"need 0 < L <= N, got L={L}, N={N}")
    if N != env.N:
        raise ConfigurationError(f"environment covers N={env.N}, requested N={N}")
    d = env.d
    if mask.L != L or mask.weights.shape != (L,) * d:
        raise ConfigurationError(
            f"mask (L={mask.L}, d={mask.d}) does not fit window L={L} in d={d}")
    field = _solve_box(env, xi, mu, tol)
    phi = field.values
    padded = np.pad(phi, [(0, 1)] * d)
    off = (N - L) // 2
    win = tuple(slice(off, off + L) for _ in range(d))
    total = 0.0
    for i in range(d):
        sl = [slice(None, N)] * d
        sl[i] = slice(1, N + 1)
        grad = padded[tuple(sl)] - phi
        dens = env.forward_table(i) * (field.xi[i] + grad) ** 2
        total += float(np.sum(mask.weights * dens[win]))
    return EstimateSample("regularized-filtered", N, mu, L, field.xi, env.seed,
                          total, field.iterations, field.residual)


def solve_periodic(env: PeriodicEnvironment, xi, mu: float = 0.0,
                   tol: float = DEFAULT_TOL) -> CorrectorField:
    """Corrector on the discrete torus; mu = 0 runs in the zero-mean subspace."""
    if mu < 0.0:
        raise ConfigurationError(f"mu must be >= 0, got {mu}")
    N, d = env.N, env.d
    xi = _check_xi(xi, d)
    diag, drift, we = _torus_arrays(env, xi)
    ia, ib = _edge_index(N, d, periodic=True)
    project = mu == 0.0
    x, relres, iters = _kernels.cg_edge_list(ia, ib, we, diag + mu, drift,
                                             tol, _iter_cap(N, d), project)
    if iters < 0:
        raise SolverError(f"periodic corrector solve did not converge (N={N}, d={d})",
                          relres, -iters)
    return CorrectorField(N, d, xi, x.reshape((N,) * d), "periodic", mu, iters, relres)


_METHOD_BY_PROVENANCE = {"law": "period-law", "space": "period-space", "cell": "period-cell"}


def estimate_periodic(env: PeriodicEnvironment, xi, mu: float = 0.0,
                      tol: float = DEFAULT_TOL) -> EstimateSample:
    """Periodic energy average over one cell; method tag from provenance."""
    field = solve_periodic(env, xi, mu, tol)
    N, d = env.N, env.d
    phi = field.values
    total = 0.0
    for i in range(d):
        grad = np.roll(phi, -1, axis=i) - phi
        total += float(np.sum(env.tables[i] * (field.xi[i] + grad) ** 2))
    value = total / N**d
    return EstimateSample(_METHOD_BY_PROVENANCE[env.provenance], N, mu, N,
                          field.xi, env.seed, value, field.iterations, field.residual)


def cg_solve(apply_A, b, tol: float = DEFAULT_TOL, max_iter: int | None = None,
             precond_diag=None, project_mean: bool = False) -> np.ndarray:
    """Generic preconditioned CG for symmetric positive (semi)definite systems.

    apply_A is a callable x -> A x (matrix-free). precond_diag, when given,
    is the diagonal of A used as a Jacobi preconditioner. project_mean runs
    the iteration in the zero-mean subspace for singular periodic operators.
    Raises SolverError when the iteration cap is hit.
    """
    b = np.asarray(b, dtype=float)
    if max_iter is None:
        max_iter = max(1000, 10 * b.size)
    x = np.zeros_like(b)
    r = b.copy()
    if project_mean:
        r -= r.mean()
    bnorm = float(np.sqrt(r @ r))
    if bnorm == 0.0:
        return x
    diag = np.ones_like(b) if precond_diag is None else np.asarray(precond_diag, dtype=float)
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        Ap = np.asarray(apply_A(p), dtype=float)
        if project_mean:
            Ap = Ap - Ap.mean()
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if project_mean:
            r -= r.mean()
            x -= x.mean()
        rn = float(np.sqrt(r @ r))
        if rn <= tol * bnorm:
            return x
        z = r / diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError("cg_solve hit the iteration cap", rn / bnorm, max_iter)
