"""Random conductance environments on the edges of Z^d.

An environment assigns a conductance in [alpha, beta] to every nearest
neighbor edge. Three structures are supported:

* ``IID``: every edge independent with a common marginal law.
* ``Islands``: a hidden i.i.d. uniform per edge; edge (z, z+e_i) takes the
  low value exactly when every hidden variable on the parallel edges
  (z', z'+e_i), |z'-z|_inf <= r, falls below a threshold. This plants islands
  of high conductance and makes the field genuinely correlated while keeping
  an explicit local rule g(hidden window) -> value.
* ``PeriodicCell``: a deterministic periodic tiling given by an explicit
  edge table on one cell.

Edges are canonical: stored from their lower endpoint along the positive
axis, so (x, x+e_i) and (x+e_i, x) are the same edge. Conductance values are
pure functions of (seed, edge id) through a counter-based hash (see rng.py),
which is what makes boxed, lazy, and law-periodized sampling mutually
consistent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.ndimage import maximum_filter

from . import rng
from .errors import ConfigurationError, DomainError

__all__ = [
    "EdgeId", "Bernoulli", "DiscreteList", "Uniform",
    "IID", "Islands", "PeriodicCell", "EnvironmentSpec",
    "BoxEnvironment", "PeriodicEnvironment", "LazyEnvironment",
    "sample_box", "conductance", "periodize_space", "sample_periodic_law",
    "asym3_cell", "write_edges_csv",
]

LAW_DISCRETE = 0
LAW_UNIFORM = 1

STRUCT_IID = 0
STRUCT_ISLANDS = 1


@dataclass(frozen=True)
class EdgeId:
    """Canonical edge of Z^d: the pair (base, base + e_axis)."""

    base: tuple
    axis: int

    def __post_init__(self):
        if not 0 <= self.axis < len(self.base):
            raise ConfigurationError(f"axis {self.axis} invalid for d={len(self.base)}")
        object.__setattr__(self, "base", tuple(int(c) for c in self.base))

    @classmethod
    def between(cls, x: Sequence[int], y: Sequence[int]) -> "EdgeId":
        """Canonical edge joining two nearest neighbors, either orientation."""
        diff = [int(b) - int(a) for a, b in zip(x, y)]
        if sorted(map(abs, diff)) != [0] * (len(diff) - 1) + [1]:
            raise ConfigurationError(f"{tuple(x)} and {tuple(y)} are not nearest neighbors")
        axis = next(i for i, v in enumerate(diff) if v != 0)
        return cls(tuple(x) if diff[axis] > 0 else tuple(y), axis)

    def code(self) -> np.uint64:
        return rng.pack_edge(self.base, self.axis, len(self.base))


# --- marginal laws -----------------------------------------------------------

@dataclass(frozen=True)
class Bernoulli:
    """Two-point law: alpha with probability prob_alpha, else beta."""

    alpha: float
    beta: float
    prob_alpha: float

    def __post_init__(self):
        if not 0 < self.alpha <= self.beta:
            raise ConfigurationError(f"need 0 < alpha <= beta, got ({self.alpha}, {self.beta})")
        if not 0.0 <= self.prob_alpha <= 1.0:
            raise ConfigurationError(f"prob_alpha {self.prob_alpha} outside [0, 1]")

    def bounds(self):
        return self.alpha, self.beta

    def mean(self):
        return self.prob_alpha * self.alpha + (1.0 - self.prob_alpha) * self.beta

    def var(self):
        return self.prob_alpha * (1.0 - self.prob_alpha) * (self.beta - self.alpha) ** 2

    def apply(self, u):
        return np.where(u < self.prob_alpha, self.alpha, self.beta)

    def kernel_params(self):
        return (LAW_DISCRETE,
                np.array([self.alpha, self.beta]),
                np.array([self.prob_alpha, 1.0]))


@dataclass(frozen=True)
class DiscreteList:
    """Finite discrete law given by values and (unnormalized) weights."""

    values: tuple
    weights: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        wts = tuple(float(w) for w in self.weights)
        if len(vals) != len(wts) or not vals:
            raise ConfigurationError("values and weights must be nonempty and same length")
        if min(vals) <= 0:
            raise ConfigurationError("conductance values must be positive")
        if min(wts) < 0 or sum(wts) <= 0:
            raise ConfigurationError("weights must be nonnegative with positive sum")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "weights", wts)

    def bounds(self):
        return min(self.values), max(self.values)

    def _probs(self):
        w = np.asarray(self.weights)
        return w / w.sum()

    def mean(self):
        return float(self._probs() @ np.asarray(self.values))

    def var(self):
        v = np.asarray(self.values)
        p = self._probs()
        return float(p @ v**2 - (p @ v) ** 2)

    def apply(self, u):
        cum = np.cumsum(self._probs())
        cum[-1] = 1.0
        idx = np.searchsorted(cum, u, side="right")
        return np.asarray(self.values)[idx]

    def kernel_params(self):
        cum = np.cumsum(self._probs())
        cum[-1] = 1.0
        return (LAW_DISCRETE, np.asarray(self.values, dtype=float), cum)


@dataclass(frozen=True)
class Uniform:
    """Continuous uniform law on [alpha, beta]."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not 0 < self.alpha <= self.beta:
            raise ConfigurationError(f"need 0 < alpha <= beta, got ({self.alpha}, {self.beta})")

    def bounds(self):
        return self.alpha, self.beta

    def mean(self):
        return 0.5 * (self.alpha + self.beta)

    def var(self):
        return (self.beta - self.alpha) ** 2 / 12.0

    def apply(self, u):
        return self.alpha + u * (self.beta - self.alpha)

    def kernel_params(self):
        return (LAW_UNIFORM, np.array([self.alpha, self.beta]), np.array([1.0]))


# --- structures --------------------------------------------------------------

@dataclass(frozen=True)
class IID:
    pass


@dataclass(frozen=True)
class Islands:
    """Hidden-uniform window rule; marginal P[value = low] = threshold^((2r+1)^d)."""

    window_radius: int
    hidden_threshold: float
    low: float
    high: float

    def __post_init__(self):
        if self.window_radius < 1:
            raise ConfigurationError("window_radius must be >= 1")
        if not 0.0 < self.hidden_threshold < 1.0:
            raise ConfigurationError("hidden_threshold must lie in (0, 1)")
        if not 0 < self.low <= self.high:
            raise ConfigurationError("need 0 < low <= high")

    def marginal_prob_low(self, d: int) -> float:
        return self.hidden_threshold ** ((2 * self.window_radius + 1) ** d)


@dataclass(frozen=True)
class PeriodicCell:
    """Deterministic periodic medium: tables[axis][x0, ..., x_{d-1}] is the
    conductance of edge (x, x + e_axis) for x in the period cell."""

    period: int
    tables: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tables, dtype=float)
        if t.ndim < 2 or t.shape[0] != t.ndim - 1:
            raise ConfigurationError("tables must have shape (d, period, ..., period)")
        d = t.shape[0]
        if t.shape[1:] != (self.period,) * d:
            raise ConfigurationError(f"tables shape {t.shape} inconsistent with period {self.period}")
        if t.min() <= 0:
            raise ConfigurationError("cell conductances must be positive")
        object.__setattr__(self, "tables", t)

    def __eq__(self, other):
        return (isinstance(other, PeriodicCell) and self.period == other.period
                and np.array_equal(self.tables, other.tables))

    def __hash__(self):
        return hash((self.period, self.tables.tobytes()))


@dataclass(frozen=True)
class EnvironmentSpec:
    """Dimension + marginal law + spatial structure of the conductance field."""

    dimension: int
    law: object
    structure: object = field(default_factory=IID)

    def __post_init__(self):
        if not 1 <= self.dimension <= rng.MAX_DIM:
            raise ConfigurationError(f"dimension must lie in [1, {rng.MAX_DIM}]")
        a, b = self.bounds
        if not 0 < a <= b:
            raise ConfigurationError(f"ellipticity bounds ({a}, {b}) invalid")

    @classmethod
    def iid(cls, dimension: int, law) -> "EnvironmentSpec":
        return cls(dimension, law, IID())

    @classmethod
    def islands(cls, dimension: int, window_radius: int, hidden_threshold: float,
                low: float, high: float) -> "EnvironmentSpec":
        s = Islands(window_radius, hidden_threshold, low, high)
        # the induced marginal, kept queryable alongside the structure
        marg = Bernoulli(low, high, s.marginal_prob_low(dimension))
        return cls(dimension, marg, s)

    @classmethod
    def periodic_cell(cls, tables) -> "EnvironmentSpec":
        t = np.asarray(tables, dtype=float)
        cell = PeriodicCell(t.shape[1], t)
        lo, hi = float(t.min()), float(t.max())
        return cls(t.shape[0], Bernoulli(lo, hi, 0.5) if lo < hi else Bernoulli(lo, hi, 1.0), cell)

    @property
    def bounds(self):
        if isinstance(self.structure, Islands):
            return self.structure.low, self.structure.high
        if isinstance(self.structure, PeriodicCell):
            t = self.structure.tables
            return float(t.min()), float(t.max())
        return self.law.bounds()

    def edge_mean(self) -> float:
        """E[omega_e] of the stationary marginal (cell average for periodic)."""
        if isinstance(self.structure, Islands):
            q = self.structure.marginal_prob_low(self.dimension)
            return q * self.structure.low + (1.0 - q) * self.structure.high
        if isinstance(self.structure, PeriodicCell):
            return float(self.structure.tables.mean())
        return self.law.mean()

    def mean_p(self) -> float:
        """E[p_omega(0)] = 2d E[omega_e] under the stationary marginal.

        For random environments this is the tilt normalizer of the walk
        estimators.  A fixed periodic cell is a point mass, so there the
        normalizer is the total incident weight at the start site instead;
        this method still reports the cell-averaged value.
        """
        return 2.0 * self.dimension * self.edge_mean()


def _env_key(seed: int, index: int = 0) -> np.uint64:
    return rng.derive_key(seed, rng.ENV_STREAM, index)


def _axis_base_grid(d: int, shape, origin) -> np.ndarray:
    """(*(shape), d) array of base coordinates: origin + index."""
    idx = np.indices(shape, dtype=np.int64)
    bases = np.moveaxis(idx, 0, -1)
    return bases + np.asarray(origin, dtype=np.int64)


def _hash_values_iid(spec: EnvironmentSpec, key: np.uint64, bases: np.ndarray, axis: int):
    codes = rng.pack_edge_grid(bases, axis, spec.dimension)
    return spec.law.apply(rng.hash_uniform(key, codes))


def _hidden_uniforms(spec: EnvironmentSpec, key: np.uint64, bases: np.ndarray, axis: int):
    codes = rng.pack_edge_grid(bases, axis, spec.dimension)
    return rng.hash_uniform(key, codes)


# --- concrete environments ---------------------------------------------------

class BoxEnvironment:
    """All edges with at least one endpoint in Q_N = [0, N)^d, stored densely.

    Table for axis i has N+1 slots along axis i (bases -1 .. N-1, slot =
    base+1) and N along the others. Immutable after construction.
    """

    def __init__(self, spec: EnvironmentSpec, N: int, seed: int, tables):
        self.spec = spec
        self.N = int(N)
        self.d = spec.dimension
        self.seed = int(seed)
        self.tables = tables
        for t in tables:
            t.setflags(write=False)

    def conductance(self, edge: EdgeId) -> float:
        base, i = edge.base, edge.axis
        N = self.N
        slot = [0] * self.d
        for j, c in enumerate(base):
            lo = -1 if j == i else 0
            if not lo <= c < N:
                raise DomainError(f"edge {edge} does not touch the box [0, {N})^{self.d}")
            slot[j] = c + 1 if j == i else c
        return float(self.tables[i][tuple(slot)])

    def forward_table(self, axis: int) -> np.ndarray:
        """Conductances of edges (z, z+e_axis) with base z in Q_N."""
        sl = [slice(None)] * self.d
        sl[axis] = slice(1, None)
        return self.tables[axis][tuple(sl)]

    def backward_table(self, axis: int) -> np.ndarray:
        """Conductances of edges (z-e_axis, z) indexed by z in Q_N."""
        sl = [slice(None)] * self.d
        sl[axis] = slice(0, -1)
        return self.tables[axis][tuple(sl)]


class PeriodicEnvironment:
    """N-periodic medium; one edge table per axis over a single cell."""

    def __init__(self, spec: EnvironmentSpec, N: int, tables, provenance: str, seed=None):
        if provenance not in ("space", "law", "cell"):
            raise ConfigurationError(f"unknown provenance {provenance!r}")
        self.spec = spec
        self.N = int(N)
        self.d = spec.dimension
        self.tables = [np.ascontiguousarray(t, dtype=float) for t in tables]
        self.provenance = provenance
        self.seed = seed
        for t in self.tables:
            t.setflags(write=False)

    def conductance(self, edge: EdgeId) -> float:
        slot = tuple(c % self.N for c in edge.base)
        return float(self.tables[edge.axis][slot])

    def mean_p(self) -> float:
        return 2.0 * self.d * float(np.mean([t.mean() for t in self.tables]))


class LazyEnvironment:
    """On-demand environment discovered edge by edge along a walk.

    Values are pure functions of (seed, walk_index, edge id); the discovered
    maps are caches and accounting, never sources of truth, so query order
    cannot change any value. Single-owner mutable state: one walk, one
    environment, one worker.
    """

    def __init__(self, spec: EnvironmentSpec, seed: int, walk_index: int = 0):
        if isinstance(spec.structure, PeriodicCell):
            raise ConfigurationError("PeriodicCell media are deterministic; use PeriodicEnvironment")
        self.spec = spec
        self.seed = int(seed)
        self.walk_index = int(walk_index)
        self.key = _env_key(seed, walk_index)
        self.discovered: dict = {}
        self.hidden: dict = {}

    def _hidden_uniform(self, edge: EdgeId) -> float:
        u = self.hidden.get(edge)
        if u is None:
            u = float(rng.hash_uniform(self.key, edge.code()))
            self.hidden[edge] = u
        return u

    def conductance(self, edge: EdgeId) -> float:
        val = self.discovered.get(edge)
        if val is not None:
            return val
        s = self.spec.structure
        if isinstance(s, Islands):
            r, d = s.window_radius, self.spec.dimension
            worst = 0.0
            for off in np.ndindex(*(2 * r + 1,) * d):
                shifted = tuple(b + o - r for b, o in zip(edge.base, off))
                worst = max(worst, self._hidden_uniform(EdgeId(shifted, edge.axis)))
            val = s.low if worst <= s.hidden_threshold else s.high
        else:
            val = float(self.spec.law.apply(rng.hash_uniform(self.key, edge.code())))
        self.discovered[edge] = val
        return val


def conductance(env, edge: EdgeId) -> float:
    """Conductance of a canonical edge in any environment."""
    return env.conductance(edge)


def sample_box(spec: EnvironmentSpec, N: int, seed: int) -> BoxEnvironment:
    """Sample every edge touching Q_N as a deterministic function of (spec, N, seed).

    For Islands, hidden uniforms are generated on the box inflated by the
    window radius so that every window is complete, then the max-filter rule
    is applied and the valid center sliced out.
    """
    if N < 1:
        raise ConfigurationError("N must be >= 1")
    d, key = spec.dimension, _env_key(seed)
    s = spec.structure
    tables = []
    for i in range(d):
        shape = tuple(N + 1 if j == i else N for j in range(d))
        origin = tuple(-1 if j == i else 0 for j in range(d))
        if isinstance(s, Islands):
            r = s.window_radius
            big_shape = tuple(n + 2 * r for n in shape)
            big_origin = tuple(o - r for o in origin)
            u = _hidden_uniforms(spec, key, _axis_base_grid(d, big_shape, big_origin), i)
            worst = maximum_filter(u, size=2 * r + 1)
            center = tuple(slice(r, r + n) for n in shape)
            tables.append(np.where(worst[center] <= s.hidden_threshold, s.low, s.high))
        elif isinstance(s, PeriodicCell):
            bases = _axis_base_grid(d, shape, origin)
            slots = tuple(bases[..., j] % s.period for j in range(d))
            tables.append(s.tables[i][slots].astype(float))
        else:
            bases = _axis_base_grid(d, shape, origin)
            tables.append(np.asarray(_hash_values_iid(spec, key, bases, i), dtype=float))
    return BoxEnvironment(spec, N, seed, tables)


def periodize_space(box: BoxEnvironment) -> PeriodicEnvironment:
    """Q_N-periodic extension of the field restricted to Q_N.

    Edges crossing the cell boundary take the wrapped value: the table is
    simply the restriction to bases in Q_N, read modulo N.
    """
    tables = []
    for i in range(box.d):
        sl = [slice(None)] * box.d
        sl[i] = slice(1, None)  # drop the base = -1 layer
        tables.append(box.tables[i][tuple(sl)].copy())
    return PeriodicEnvironment(box.spec, box.N, tables, "space", seed=box.seed)


def sample_periodic_law(spec: EnvironmentSpec, N: int, seed: int) -> PeriodicEnvironment:
    """Periodize the hidden i.i.d. variables, then apply the local rule.

    For IID structures the rule is a per-edge map, so this coincides exactly
    with periodize_space(sample_box(...)) at the same seed. For Islands the
    windows wrap around the torus, which changes edges near the boundary.
    """
    if N < 1:
        raise ConfigurationError("N must be >= 1")
    s = spec.structure
    if isinstance(s, PeriodicCell):
        raise ConfigurationError("PeriodicCell has no hidden i.i.d. representation to periodize")
    d, key = spec.dimension, _env_key(seed)
    shape = (N,) * d
    origin = (0,) * d
    tables = []
    for i in range(d):
        if isinstance(s, Islands):
            u = _hidden_uniforms(spec, key, _axis_base_grid(d, shape, origin), i)
            worst = maximum_filter(u, size=2 * s.window_radius + 1, mode="wrap")
            tables.append(np.where(worst <= s.hidden_threshold, s.low, s.high))
        else:
            bases = _axis_base_grid(d, shape, origin)
            tables.append(np.asarray(_hash_values_iid(spec, key, bases, i), dtype=float))
    return PeriodicEnvironment(spec, N, tables, "law", seed=seed)


def explicit_cell_environment(spec: EnvironmentSpec) -> PeriodicEnvironment:
    """The deterministic PeriodicEnvironment of a PeriodicCell spec."""
    s = spec.structure
    if not isinstance(s, PeriodicCell):
        raise ConfigurationError("spec does not carry an explicit periodic cell")
    return PeriodicEnvironment(spec, s.period, list(s.tables), "cell")


# --- shipped periodic cell ---------------------------------------------------

# A 3-periodic d=2 cell with no inversion symmetry (checked in tests by
# exhausting all 18 point-inversion candidates). Used by the asymmetric-cell
# walk experiments, where the lack of symmetry produces a visible n^(-1/2)
# term for odd functionals of the rescaled endpoint.
# Layered stripes: conductances depend on x0 only, and the up/down pattern
# along axis 0 (strong, strong, weak) has no inversion or reflection symmetry.
# A walk from the origin therefore carries a transient mean drift along e_0
# (about 0.494/sqrt(n) for the rescaled endpoint), which is what the
# odd-functional cell experiments measure.
_ASYM3_TABLES = np.array([
    # axis 0: edge (x, x + e_0), indexed [x0, x1]
    [[4.0, 4.0, 4.0],
     [4.0, 4.0, 4.0],
     [1.0, 1.0, 1.0]],
    # axis 1: edge (x, x + e_1)
    [[1.0, 1.0, 1.0],
     [4.0, 4.0, 4.0],
     [4.0, 4.0, 4.0]],
])


def asym3_cell() -> EnvironmentSpec:
    """The shipped asymmetric 3-periodic cell in d=2."""
    return EnvironmentSpec.periodic_cell(_ASYM3_TABLES)


BUILTIN_CELLS = {"asym3": asym3_cell}


def read_cell_csv(path) -> np.ndarray:
    """Inverse of write_edges_csv for one period cell.

    Expects columns b0..b{d-1}, axis, value with nonnegative coordinates;
    the period is the largest coordinate + 1 and every edge of the cell
    must appear exactly once. Returns tables of shape (d, period, ...).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        d = len(header) - 2 if header else 0
        if d < 1 or header != [f"b{j}" for j in range(d)] + ["axis", "value"]:
            raise ConfigurationError(
                f"{path}: expected header b0..b{{d-1}},axis,value")
        entries = {}
        for row in reader:
            if len(row) != d + 2:
                raise ConfigurationError(f"{path}: malformed row {row!r}")
            base = tuple(int(t) for t in row[:d])
            entries[(int(row[d]), base)] = float(row[d + 1])
    if not entries or min(min(b) for _, b in entries) < 0:
        raise ConfigurationError(f"{path}: cell coordinates must be >= 0")
    period = 1 + max(max(b) for _, b in entries)
    tables = np.zeros((d,) + (period,) * d)
    expect = d * period ** d
    if len(entries) != expect:
        raise ConfigurationError(
            f"{path}: expected {expect} edges for a {period}-cell in d={d}, "
            f"got {len(entries)}")
    for (axis, base), value in entries.items():
        if not 0 <= axis < d:
            raise ConfigurationError(f"{path}: axis {axis} out of range")
        tables[(axis,) + base] = value
    return tables


def write_edges_csv(env, path) -> int:
    """Debug dump: one row per edge, columns b0..b{d-1}, axis, value.

    Works for box environments (all stored edges) and periodic ones (one
    cell). Returns the number of rows written.
    """
    d = env.d
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"b{j}" for j in range(d)] + ["axis", "value"])
        for axis in range(d):
            if isinstance(env, BoxEnvironment):
                shape = env.tables[axis].shape
                origin = tuple(-1 if j == axis else 0 for j in range(d))
            else:
                shape = env.tables[axis].shape
                origin = (0,) * d
            for idx in np.ndindex(*shape):
                base = tuple(i + o for i, o in zip(idx, origin))
                w.writerow(list(base) + [axis, repr(float(env.tables[axis][idx]))])
                rows += 1
    return rows
