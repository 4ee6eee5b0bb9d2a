"""Experiment configuration: a small INI dialect parsed into a typed record.

Two sections. [environment] declares the conductance model:

    dimension = 2
    law       = bernoulli 1 4 0.5      # or: uniform 1 4
                                       # or: discrete 1:0.5,4:0.25,9:0.25
    structure = iid                    # or: islands <radius> <threshold>
                                       # or: cell asym3 | cell <edges.csv>

[experiment] declares what to run over which sweep:

    method       = period-law          # dirichlet | regularized | period-law |
                                       # period-space | rwre-msd | rwre-functional
    sweep        = 8 16 32 64          # N for correctors, n for walks
    realizations = 4000 * (64 / N)**2  # integer, or an expression in N (or n)
    xi           = 1 0                 # optional, default first basis vector
    seed         = 1
    workers      = 1
    output       = results.csv
    reference    = exact:2             # none | exact:<value> | surrogate:<method>
    tol          = 1e-10               # optional solver tolerance
    mu           = 0.05                # optional, regularized / periodic
    filter_side  = 24                  # optional, regularized window L
    mask         = affine              # optional mask shape
    functional   = sin                 # rwre-functional: sin | gaussian |
                                       # indicator <z> | square
    track_edges  = false               # optional, rwre discovery accounting

Anything malformed raises ConfigurationError naming the section and key.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .corrector import DEFAULT_TOL
from .environment import (BUILTIN_CELLS, Bernoulli, DiscreteList, EnvironmentSpec,
                          Uniform, read_cell_csv)
from .errors import ConfigurationError

METHODS = ("dirichlet", "regularized", "period-law", "period-space",
           "rwre-msd", "rwre-functional")
CORRECTOR_METHODS = METHODS[:4]
WALK_METHODS = METHODS[4:]
MASK_SHAPES = ("affine", "flat")
FUNCTIONALS = ("square", "sin", "gaussian", "indicator")


@dataclass
class Reference:
    kind: str                      # "none" | "exact" | "surrogate"
    value: float | None = None     # exact references only
    method: str | None = None      # surrogate references only


@dataclass
class ExperimentConfig:
    spec: EnvironmentSpec
    method: str
    sweep: list[int]
    realizations: str              # integer literal or expression in N / n
    xi: np.ndarray
    seed: int
    workers: int
    output: str
    reference: Reference
    tol: float = DEFAULT_TOL
    mu: float | None = None
    filter_side: int | None = None
    mask_shape: str = "affine"
    functional: str = "square"
    functional_arg: float | None = None
    track_edges: bool = False

    def realizations_at(self, point: int) -> int:
        """Evaluate the realization budget at one sweep point."""
        try:
            k = eval(self.realizations, {"__builtins__": {}},
                     {"N": point, "n": point})
        except Exception as exc:
            raise ConfigurationError(
                f"cannot evaluate realizations {self.realizations!r} "
                f"at point {point}: {exc}") from None
        k = int(k)
        if k < 1:
            raise ConfigurationError(
                f"realizations must be >= 1, got {k} at point {point}")
        return k


def _fail(section, key, msg):
    raise ConfigurationError(f"[{section}] {key}: {msg}")


def _parse_law(text):
    parts = text.split()
    name = parts[0].lower() if parts else ""
    try:
        if name == "bernoulli" and len(parts) == 4:
            return Bernoulli(float(parts[1]), float(parts[2]), float(parts[3]))
        if name == "uniform" and len(parts) == 3:
            return Uniform(float(parts[1]), float(parts[2]))
        if name == "discrete" and len(parts) == 2:
            pairs = [item.split(":") for item in parts[1].split(",")]
            values = [float(v) for v, _ in pairs]
            weights = [float(w) for _, w in pairs]
            return DiscreteList(tuple(values), tuple(weights))
    except (ValueError, IndexError):
        pass
    _fail("environment", "law",
          f"expected 'bernoulli a b p', 'uniform a b' or "
          f"'discrete v:w,...', got {text!r}")


def _parse_spec(cp):
    if not cp.has_section("environment"):
        raise ConfigurationError("missing [environment] section")
    sec = cp["environment"]
    try:
        d = int(sec.get("dimension", ""))
    except ValueError:
        _fail("environment", "dimension", "expected an integer")
    structure = sec.get("structure", "iid").split()
    kind = structure[0].lower() if structure else ""
    if kind == "cell":
        if len(structure) != 2:
            _fail("environment", "structure", "expected 'cell <name-or-csv>'")
        name = structure[1]
        if name in BUILTIN_CELLS:
            spec = BUILTIN_CELLS[name]()
        else:
            try:
                spec = EnvironmentSpec.periodic_cell(read_cell_csv(name))
            except OSError as exc:
                _fail("environment", "structure", f"cannot read cell {name}: {exc}")
        if spec.dimension != d:
            _fail("environment", "structure",
                  f"cell dimension {spec.dimension} != dimension {d}")
        return spec
    law = _parse_law(sec.get("law", ""))
    if kind == "iid":
        return EnvironmentSpec.iid(d, law)
    if kind == "islands" and len(structure) == 3:
        # the law entry supplies the two conductance values; the mixing
        # probability is induced by the window rule, not taken from the law
        lo, hi = law.bounds()
        try:
            return EnvironmentSpec.islands(d, int(structure[1]),
                                           float(structure[2]), lo, hi)
        except ValueError:
            pass
    _fail("environment", "structure",
          f"expected 'iid', 'islands r thr' or 'cell name', "
          f"got {' '.join(structure)!r}")


def _parse_reference(text):
    text = text.strip()
    if text == "none":
        return Reference("none")
    if text.startswith("exact:"):
        try:
            return Reference("exact", value=float(text[6:]))
        except ValueError:
            _fail("experiment", "reference", f"bad exact value in {text!r}")
    if text.startswith("surrogate:"):
        m = text[10:].strip()
        if m not in METHODS:
            _fail("experiment", "reference", f"unknown surrogate method {m!r}")
        return Reference("surrogate", method=m)
    _fail("experiment", "reference",
          f"expected 'none', 'exact:<value>' or 'surrogate:<method>', "
          f"got {text!r}")


def parse_config(path, overrides=None) -> ExperimentConfig:
    """Read an experiment INI file; overrides is a dict of experiment keys
    (seed, workers, output, tol) taking precedence, for CLI flags."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigurationError(f"config parse error: {exc}") from None

    spec = _parse_spec(cp)
    if not cp.has_section("experiment"):
        raise ConfigurationError("missing [experiment] section")
    sec = dict(cp["experiment"])
    sec.update({k: str(v) for k, v in (overrides or {}).items()
                if v is not None})

    method = sec.get("method", "")
    if method not in METHODS:
        _fail("experiment", "method",
              f"expected one of {', '.join(METHODS)}, got {method!r}")
    try:
        sweep = [int(tok) for tok in sec.get("sweep", "").split()]
    except ValueError:
        _fail("experiment", "sweep", "expected integers separated by spaces")
    if not sweep or any(b <= a for a, b in zip(sweep, sweep[1:])):
        _fail("experiment", "sweep", "expected a strictly increasing list")
    if min(sweep) < 1:
        _fail("experiment", "sweep", "points must be >= 1")

    d = spec.dimension
    xi_text = sec.get("xi", "")
    if xi_text:
        try:
            xi = np.array([float(t) for t in xi_text.split()])
        except ValueError:
            _fail("experiment", "xi", "expected floats")
        if xi.shape != (d,):
            _fail("experiment", "xi", f"expected {d} components")
        if abs(float(xi @ xi) - 1.0) > 1e-9:
            _fail("experiment", "xi", "expected a unit vector")
    else:
        xi = np.zeros(d)
        xi[0] = 1.0

    def number(key, default, conv):
        raw = sec.get(key)
        if raw is None:
            return default
        try:
            return conv(raw)
        except ValueError:
            _fail("experiment", key, f"expected a {conv.__name__}")

    mask_shape = sec.get("mask", "affine")
    if mask_shape not in MASK_SHAPES:
        _fail("experiment", "mask",
              f"expected one of {', '.join(MASK_SHAPES)}")
    functional = sec.get("functional", "square").split()
    fname = functional[0] if functional else ""
    if fname not in FUNCTIONALS:
        _fail("experiment", "functional",
              f"expected one of {', '.join(FUNCTIONALS)}")
    farg = None
    if fname == "indicator":
        if len(functional) != 2:
            _fail("experiment", "functional", "expected 'indicator <z>'")
        farg = float(functional[1])
    elif len(functional) != 1:
        _fail("experiment", "functional", f"{fname} takes no argument")

    track = sec.get("track_edges", "false").strip().lower()
    if track not in ("true", "false"):
        _fail("experiment", "track_edges", "expected true or false")

    cfg = ExperimentConfig(
        spec=spec,
        method=method,
        sweep=sweep,
        realizations=sec.get("realizations", "100"),
        xi=xi,
        seed=number("seed", 1, int),
        workers=number("workers", 1, int),
        output=sec.get("output", "results.csv"),
        reference=_parse_reference(sec.get("reference", "none")),
        tol=number("tol", DEFAULT_TOL, float),
        mu=number("mu", None, float),
        filter_side=number("filter_side", None, int),
        mask_shape=mask_shape,
        functional=fname,
        functional_arg=farg,
        track_edges=(track == "true"),
    )
    _validate(cfg)
    return cfg


def _validate(cfg):
    for point in cfg.sweep:
        cfg.realizations_at(point)
    if cfg.workers < 1:
        _fail("experiment", "workers", "expected >= 1")
    if cfg.tol <= 0:
        _fail("experiment", "tol", "expected > 0")
    if cfg.mu is not None and cfg.mu < 0:
        _fail("experiment", "mu", "expected >= 0")
    is_cell = cfg.spec.structure.__class__.__name__ == "PeriodicCell"
    if cfg.method in CORRECTOR_METHODS and is_cell:
        _fail("experiment", "method",
              "corrector sweeps need a random structure; cells are fixed "
              "(use the rwre methods)")
    if cfg.method in WALK_METHODS and cfg.method == "rwre-msd" \
            and cfg.functional != "square":
        _fail("experiment", "functional",
              "rwre-msd fixes the functional; use rwre-functional")
    ref = cfg.reference
    if ref.kind == "surrogate":
        same_family = ((cfg.method in CORRECTOR_METHODS) ==
                       (ref.method in CORRECTOR_METHODS))
        if not same_family:
            _fail("experiment", "reference",
                  "surrogate method must share the sweep variable "
                  "(corrector vs walk)")
        if ref.method in CORRECTOR_METHODS and is_cell:
            _fail("experiment", "reference",
                  "corrector surrogate needs a random structure")
