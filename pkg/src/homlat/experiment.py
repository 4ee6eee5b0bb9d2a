"""Sweep driver: realizations per sweep point, deterministic reduction, CSV.

Corrector methods draw one fresh environment per realization with a child
seed derived from (master seed, point index, realization index), so results
are reproducible for any worker count; realizations are dispatched to a
process pool in fixed blocks and reduced in block order. Walk methods call
the ensemble estimators once per point (walks are already sharded by walk
index inside the kernels).

Solver failures never abort a sweep: the realization is dropped and counted
in the warnings column of the results row.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .analysis import aggregate, fit_rate, partial_triples
from .config import CORRECTOR_METHODS, ExperimentConfig, Reference
from .corrector import (default_filter_side, default_mu, estimate_dirichlet,
                        estimate_periodic, estimate_regularized, make_mask)
from .environment import periodize_space, sample_box, sample_periodic_law
from .errors import ConfigurationError, SolverError
from .rwre import (Gaussian, Indicator, SinFirstCoord, SquareDisplacement,
                   estimate_functional)

BLOCK = 64    # realizations per pool task; fixed so sharding cannot move results

RESULT_COLUMNS = ("method", "d", "point", "k", "mean", "variance", "std_error",
                  "stat_err", "syst_err", "reference", "reference_kind",
                  "warnings", "wall_time_s")
FIT_COLUMNS = ("curve", "x", "y", "fitted_y", "rate", "prefactor",
               "residual_rms")


@dataclass
class PointResult:
    method: str
    d: int
    point: int
    k: int
    mean: float
    variance: float
    std_error: float
    stat_err: float
    syst_err: float | None
    reference: float | None
    reference_kind: str
    warnings: int
    wall_time_s: float


def _functional(cfg: ExperimentConfig, method: str):
    if method == "rwre-msd" or cfg.functional == "square":
        return SquareDisplacement(tuple(cfg.xi))
    if cfg.functional == "sin":
        return SinFirstCoord()
    if cfg.functional == "gaussian":
        return Gaussian()
    return Indicator(tuple(cfg.xi), cfg.functional_arg)


def _one_corrector(spec, method, N, seed, xi, tol, mu, L, mask):
    if method == "dirichlet":
        return estimate_dirichlet(sample_box(spec, N, seed), N, xi, tol).value
    if method == "regularized":
        return estimate_regularized(sample_box(spec, N, seed), N, L, mu,
                                    mask, xi, tol).value
    if method == "period-law":
        env = sample_periodic_law(spec, N, seed)
    else:
        env = periodize_space(sample_box(spec, N, seed))
    return estimate_periodic(env, xi, mu, tol).value


def _corrector_block(args):
    """One pool task: a block of realizations at one point.

    Returns the successful values in realization order plus the failure
    count, so the reduction is identical however blocks land on workers.
    """
    spec, method, N, seeds, xi, tol, mu, L, mask_shape = args
    xi = np.asarray(xi)
    mask = None
    if method == "regularized":
        mask = make_mask(N, L, mask_shape, spec.dimension)
    values, failures = [], 0
    for seed in seeds:
        try:
            values.append(_one_corrector(spec, method, N, seed, xi, tol,
                                         mu, L, mask))
        except SolverError:
            failures += 1
    return values, failures


def _point_params(cfg: ExperimentConfig, method: str, N: int):
    if method == "regularized":
        L = cfg.filter_side if cfg.filter_side is not None else default_filter_side(N)
        mu = cfg.mu if cfg.mu is not None else default_mu(N)
    else:
        L, mu = N, (cfg.mu if cfg.mu is not None else 0.0)
    return mu, L


def _run_corrector_point(cfg: ExperimentConfig, method: str, pidx: int,
                         N: int, master: int, pool):
    k = cfg.realizations_at(N)
    seeds = [rng.derive_key(master, pidx, i) for i in range(k)]
    mu, L = _point_params(cfg, method, N)
    tasks = [(cfg.spec, method, N, seeds[lo:lo + BLOCK], tuple(cfg.xi),
              cfg.tol, mu, L, cfg.mask_shape)
             for lo in range(0, k, BLOCK)]
    blocks = pool.map(_corrector_block, tasks) if pool else map(_corrector_block, tasks)
    values, failures = [], 0
    for vals, nfail in blocks:
        values.extend(vals)
        failures += nfail
    if not values:
        raise SolverError(
            f"all {k} realizations failed at point {N}", 0.0, 0)
    stats = aggregate(partial_triples(np.array(values)))
    return stats, k, failures


def run_experiment(cfg: ExperimentConfig, progress=None) -> list[PointResult]:
    """Run the sweep; returns one PointResult per sweep point.

    progress, if given, is called with each finished PointResult (the CLI
    prints them as they come).
    """
    surrogate_means = None
    if cfg.reference.kind == "surrogate":
        surrogate_means = _surrogate_means(cfg)
    pool = None
    try:
        if cfg.method in CORRECTOR_METHODS and cfg.workers > 1:
            pool = ProcessPoolExecutor(max_workers=cfg.workers)
        results = []
        for pidx, point in enumerate(cfg.sweep):
            t0 = time.perf_counter()
            if cfg.method in CORRECTOR_METHODS:
                stats, k, warn = _run_corrector_point(
                    cfg, cfg.method, pidx, point, cfg.seed, pool)
                mean, var, se = stats.mean, stats.variance, stats.std_error
            else:
                k = cfg.realizations_at(point)
                est = estimate_functional(
                    cfg.spec, k, point, _functional(cfg, cfg.method),
                    master_seed=rng.derive_key(cfg.seed, pidx, 0),
                    track_edges=cfg.track_edges)
                mean, var, se, warn = est.value, est.sample_variance, est.std_error, 0
            ref = _reference_at(cfg.reference, surrogate_means, pidx)
            row = PointResult(
                method=cfg.method, d=cfg.spec.dimension, point=point, k=k,
                mean=mean, variance=var, std_error=se,
                stat_err=float(np.sqrt(var)),
                syst_err=None if ref is None else abs(mean - ref),
                reference=ref, reference_kind=cfg.reference.kind,
                warnings=warn, wall_time_s=time.perf_counter() - t0)
            results.append(row)
            if progress:
                progress(row)
        return results
    finally:
        if pool:
            pool.shutdown()


def _surrogate_means(cfg: ExperimentConfig):
    """Reference per point: the mean of an independent run of another method."""
    master = rng.derive_key(cfg.seed, rng.SURROGATE_STREAM, 0)
    means = []
    for pidx, point in enumerate(cfg.sweep):
        if cfg.reference.method in CORRECTOR_METHODS:
            stats, _, _ = _run_corrector_point(
                cfg, cfg.reference.method, pidx, point, master, None)
            means.append(stats.mean)
        else:
            est = estimate_functional(
                cfg.spec, cfg.realizations_at(point), point,
                _functional(cfg, cfg.reference.method),
                master_seed=rng.derive_key(master, pidx, 0),
                track_edges=False)
            means.append(est.value)
    return means


def _reference_at(ref: Reference, surrogate_means, pidx):
    if ref.kind == "exact":
        return ref.value
    if ref.kind == "surrogate":
        return surrogate_means[pidx]
    return None


# --- CSV emission -----------------------------------------------------------

def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))  # plain repr even for numpy scalars
    return str(value)


def write_results_csv(rows: list[PointResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([_cell(getattr(r, col)) for col in RESULT_COLUMNS])


def read_results_csv(path) -> list[PointResult]:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigurationError(f"cannot read results {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(RESULT_COLUMNS):
            raise ConfigurationError(
                f"{path}: expected columns {','.join(RESULT_COLUMNS)}")
        rows = []
        for rec in reader:
            rows.append(PointResult(
                method=rec["method"], d=int(rec["d"]), point=int(rec["point"]),
                k=int(rec["k"]), mean=float(rec["mean"]),
                variance=float(rec["variance"]),
                std_error=float(rec["std_error"]),
                stat_err=float(rec["stat_err"]),
                syst_err=float(rec["syst_err"]) if rec["syst_err"] else None,
                reference=float(rec["reference"]) if rec["reference"] else None,
                reference_kind=rec["reference_kind"],
                warnings=int(rec["warnings"]),
                wall_time_s=float(rec["wall_time_s"])))
        return rows


def compute_fits(rows: list[PointResult]):
    """Rate fits of the statistical and systematic error curves.

    Returns {curve: (RateFit, points)}; a curve is skipped when it has
    fewer than 3 usable points or touches zero (nothing to fit on a log
    scale, e.g. constant environments).
    """
    fits = {}
    if len(rows) < 3:
        return fits
    curves = {"stat_err": [(r.point, r.stat_err) for r in rows]}
    if all(r.syst_err is not None for r in rows):
        curves["syst_err"] = [(r.point, r.syst_err) for r in rows]
    for name, pts in curves.items():
        try:
            fits[name] = (fit_rate(pts), pts)
        except ConfigurationError:
            continue
    return fits


def write_fits_csv(fits, path) -> None:
    """Sidecar CSV: per-point (x, y, fitted_y) plus the fit summary columns
    repeated on each row, one block per curve."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIT_COLUMNS)
        for name, (fit, pts) in sorted(fits.items()):
            for x, y in pts:
                fitted = fit.prefactor * float(x) ** (-fit.rate)
                w.writerow([name, _cell(float(x)), _cell(float(y)),
                            _cell(fitted), _cell(fit.rate),
                            _cell(fit.prefactor), _cell(fit.residual_rms)])
