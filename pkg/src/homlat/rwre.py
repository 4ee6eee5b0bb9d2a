"""Random walks among random conductances and the annealed Monte Carlo
estimators of the homogenized matrix.

The discrete-time walk jumps from z to a neighbor z' with probability
omega_(z,z')/p(z), p(z) = sum of the 2d incident conductances. Averaging a
functional of the rescaled endpoint under the tilted weight p(0)/E[p] over
independent (environment, walk) pairs estimates Gaussian expectations with
covariance 2 A^disc, A^disc = A_hom / E[p]:

    (1/(k E[p])) sum_i p0_i f(Y_n_i / sqrt(n))  ->  E f(B_1).

With f = (xi.x)^2 this is the mean-square-displacement estimator of
2 xi.A^disc xi. E[p] = 2d E[omega_e] is known in closed form for every
shipped spec. A fixed periodic cell is the degenerate case: its law is a
point mass, so E[p] = p(0), the tilt weight is identically 1, and the
estimator is the plain quenched average over walks from the origin of the
cell. Starting anywhere stationary would symmetrize the displacement law
and erase the finite-n bias the cell runs are meant to expose.

Each walk owns an independent environment and trajectory stream derived from
(master_seed, walk_index), so results are reproducible for any worker count.
The ensemble loops run in numba (see _kernels); the single-walk `step` /
`run_walk` path below is plain Python over a LazyEnvironment and is pinned
bit-for-bit against the kernels in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, rng
from .analysis import aggregate, partial_triples
from .environment import (EdgeId, EnvironmentSpec, IID, Islands, LazyEnvironment,
                          PeriodicCell, conductance, explicit_cell_environment)
from .errors import CapabilityError, ConfigurationError

__all__ = [
    "WalkState", "WalkOutcome", "McEstimate",
    "SquareDisplacement", "Gaussian", "Indicator", "SinFirstCoord",
    "step", "run_walk", "estimate_msd", "estimate_functional", "limiting_variance",
]


@dataclass
class WalkState:
    position: np.ndarray
    steps: int
    env: object
    rng_state: int


@dataclass
class WalkOutcome:
    endpoint: np.ndarray
    n: int
    p0: float               # p_omega(origin) at time 0: the tilt numerator
    discovered_edges: int


@dataclass
class McEstimate:
    k: int
    n: int
    value: float
    sample_variance: float  # unbiased variance of the per-walk tilted summand
    std_error: float        # sqrt(sample_variance / k)
    mean_discovered_edges: float | None = None


# --- functionals of the rescaled endpoint -------------------------------------

@dataclass(frozen=True)
class SquareDisplacement:
    """f(x) = (xi.x)^2; the estimator of 2 xi.A^disc xi."""

    xi: tuple

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return (x @ np.asarray(self.xi)) ** 2

    def limit(self, sigma2: float, d: int) -> float:
        # E (xi.B)^2 with Var(xi.B) = sigma2
        return sigma2


@dataclass(frozen=True)
class Gaussian:
    """f(x) = exp(-|x|^2 / 2)."""

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return np.exp(-0.5 * np.sum(x * x, axis=-1))

    def limit(self, sigma2: float, d: int) -> float:
        # E exp(-|B|^2/2) for isotropic B with per-coordinate variance sigma2
        return (sigma2 + 1.0) ** (-d / 2.0)


@dataclass(frozen=True)
class Indicator:
    """f(x) = 1[xi.x <= z]."""

    xi: tuple
    z: float

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return (x @ np.asarray(self.xi) <= self.z).astype(float)

    def limit(self, sigma2: float, d: int) -> float:
        return 0.5 * (1.0 + math.erf(self.z / math.sqrt(2.0 * sigma2)))


@dataclass(frozen=True)
class SinFirstCoord:
    """f(x) = sin(x_1); odd, so the Gaussian limit vanishes and the finite-n
    value isolates the n^(-1/2) correction on asymmetric media."""

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return np.sin(x[..., 0])

    def limit(self, sigma2: float, d: int) -> float:
        return 0.0


# --- single-walk Python path ---------------------------------------------------

def _incident_weights(env, pos) -> tuple:
    """The 2d incident conductances at pos in kernel order
    (fwd_0, bwd_0, fwd_1, bwd_1, ...) and their sum, accumulated in the same
    float order as the kernels."""
    d = len(pos)
    weights = []
    tot = 0.0
    for i in range(d):
        fwd = conductance(env, EdgeId(tuple(pos), i))
        weights.append(fwd)
        tot += fwd
        back = tuple(c - 1 if j == i else c for j, c in enumerate(pos))
        bwd = conductance(env, EdgeId(back, i))
        weights.append(bwd)
        tot += bwd
    return weights, tot


def step(state: WalkState) -> WalkState:
    """One jump of the discrete-time walk; consumes exactly one uniform."""
    pos = np.asarray(state.position, dtype=np.int64).copy()
    weights, tot = _incident_weights(state.env, pos)
    nxt, u = rng.stream_next(state.rng_state)
    target = u * tot
    acc = 0.0
    j = 2 * len(pos) - 1
    for jj, w in enumerate(weights):
        acc += w
        if target < acc:
            j = jj
            break
    pos[j >> 1] += 1 - 2 * (j & 1)
    return WalkState(pos, state.steps + 1, state.env, nxt)


def run_walk(spec: EnvironmentSpec, n: int, seed: int, walk_index: int = 0) -> WalkOutcome:
    """One walk of n steps in a fresh lazily discovered environment.

    The environment and trajectory keys are derived from (seed, walk_index),
    matching walk number walk_index of the ensemble kernels exactly.
    """
    if n < 0:
        raise ConfigurationError("n must be >= 0")
    d = spec.dimension
    if isinstance(spec.structure, PeriodicCell):
        env = explicit_cell_environment(spec)
    else:
        env = LazyEnvironment(spec, seed, walk_index)
    state = WalkState(np.zeros(d, np.int64), 0,
                      env, rng.derive_key(seed, rng.TRAJ_STREAM, walk_index))
    _, p0 = _incident_weights(env, state.position)
    for _ in range(n):
        state = step(state)
    discovered = len(env.discovered) if isinstance(env, LazyEnvironment) else 0
    return WalkOutcome(state.position, n, p0, discovered)


# --- ensemble estimators --------------------------------------------------------

def _hashed_kernel_args(spec: EnvironmentSpec):
    d = spec.dimension
    bits = rng.coord_bits(d)
    shifts = np.array([3 + i * bits for i in range(d)], dtype=np.uint64)
    off = rng.coord_offset(d)
    s = spec.structure
    if isinstance(s, Islands):
        r = s.window_radius
        win = np.array(list(np.ndindex(*(2 * r + 1,) * d)), dtype=np.int64) - r
        law_id, law_vals, law_cum = spec.law.kernel_params()
        return (d, off, shifts, law_id, np.asarray(law_vals, float), np.asarray(law_cum, float),
                _kernels.STRUCT_ISLANDS, win, s.hidden_threshold, s.low, s.high, r)
    law_id, law_vals, law_cum = spec.law.kernel_params()
    return (d, off, shifts, law_id, np.asarray(law_vals, float), np.asarray(law_cum, float),
            _kernels.STRUCT_IID, np.empty((0, d), dtype=np.int64), 0.0, 0.0, 0.0, 0)


def _ensemble_endpoints(spec: EnvironmentSpec, k: int, n: int, master_seed: int,
                        track_edges: bool):
    """Endpoints (displacements), p0 weights, and discovery counts for k walks."""
    master = np.uint64(int(master_seed) & 0xFFFFFFFFFFFFFFFF)
    if isinstance(spec.structure, PeriodicCell):
        cell = spec.structure
        d = spec.dimension
        tables = np.ascontiguousarray(cell.tables.reshape(d, -1))
        strides = np.array([cell.period ** (d - 1 - i) for i in range(d)], dtype=np.int64)
        disp, p0 = _kernels.walk_cell_ensemble(master, k, n, d, cell.period, tables, strides)
        return disp, p0, None
    args = _hashed_kernel_args(spec)
    d, off = args[0], args[1]
    margin = args[11] + 1
    if n + margin >= off:
        raise ConfigurationError(f"walk length {n} exceeds the packable range for d={d}")
    end, p0, disc = _kernels.walk_ensemble(master, k, n, *args[:11], track_edges)
    return end, p0, (disc if track_edges else None)


def _tilt_normalizer(spec: EnvironmentSpec) -> float:
    """E[p(0)] under the environment law: the denominator of the tilt.

    Incident conductances are stationary for the hashed structures, so this
    is 2d E[omega_e]. A fixed cell is a point mass and the expectation is
    p(0) itself, which cancels the numerator exactly.
    """
    s = spec.structure
    if isinstance(s, PeriodicCell):
        env = explicit_cell_environment(spec)
        _, p0 = _incident_weights(env, np.zeros(spec.dimension, dtype=np.int64))
        return p0
    return spec.mean_p()


def estimate_functional(spec: EnvironmentSpec, k: int, n: int, f,
                        master_seed: int, track_edges: bool = True) -> McEstimate:
    """Tilted Monte Carlo average of f(Y_n / sqrt(n)) over k walks.

    Per-walk summand: p0 * f(Y_n/sqrt(n)) / E[p(0)]. Reduction is an
    order-fixed chunked tree merge, so the result is independent of
    threading.
    """
    if k < 1 or n < 1:
        raise ConfigurationError("need k >= 1 and n >= 1")
    end, p0, disc = _ensemble_endpoints(spec, k, n, master_seed, track_edges)
    x = end.astype(float) / math.sqrt(n)
    summands = p0 * np.asarray(f.evaluate(x), dtype=float) / _tilt_normalizer(spec)
    stats = aggregate(partial_triples(summands))
    mean_disc = float(np.mean(disc)) if disc is not None else None
    return McEstimate(k, n, stats.mean, stats.variance, stats.std_error, mean_disc)


def estimate_msd(spec: EnvironmentSpec, k: int, n: int, xi,
                 master_seed: int, track_edges: bool = True) -> McEstimate:
    """Mean-square displacement estimator of 2 xi.A^disc xi.

    Identical to estimate_functional with f(x) = (xi.x)^2: the 1/n in the
    classical normalization is exactly the rescaling of the endpoint.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (spec.dimension,):
        raise ConfigurationError(f"xi must have shape ({spec.dimension},)")
    return estimate_functional(spec, k, n, SquareDisplacement(tuple(xi)),
                               master_seed, track_edges)


def limiting_variance(spec: EnvironmentSpec, a_disc: float) -> float:
    """Predicted n, k -> infinity variance of the per-walk MSD summand.

    a_disc is the estimated quantity 2 xi.A^disc xi. Closed form
    (3 E[p^2]/E[p]^2 - 1) a_disc^2 requires independent edges with known
    moments, hence IID structure only.
    """
    if not isinstance(spec.structure, IID):
        raise CapabilityError(
            "limiting_variance needs independent edges with closed-form moments "
            f"(IID structure), got {type(spec.structure).__name__}")
    d = spec.dimension
    mean_p = 2 * d * spec.law.mean()
    var_p = 2 * d * spec.law.var()
    second = var_p + mean_p**2
    return (3.0 * second / mean_p**2 - 1.0) * a_disc**2
