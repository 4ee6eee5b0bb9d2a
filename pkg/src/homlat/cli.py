"""Command line front end: run sweeps, plan budgets, dump environments, refit.

    homlat run experiment.ini [--seed S] [--workers W] [--output F] [--tol T]
    homlat plan 0.02 1.29 1.48 2
    homlat dump-env experiment.ini [--point N] [--output F]
    homlat fit results.csv

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from . import rng
from .analysis import plan_budget
from .config import parse_config
from .environment import (explicit_cell_environment, periodize_space,
                          sample_box, sample_periodic_law, write_edges_csv)
from .errors import (CapabilityError, ConfigurationError, DomainError,
                     InsufficientDataError)
from .experiment import (compute_fits, read_results_csv, run_experiment,
                         write_fits_csv, write_results_csv)


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; the contract wants 1."""

    def error(self, message):
        raise ConfigurationError(message)


def _build_parser():
    parser = _Parser(prog="homlat",
                     description="homogenized-coefficient experiments on "
                                 "random lattice conductances")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    run = sub.add_parser("run", help="run a sweep from a config file")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--output")
    run.add_argument("--tol", type=float)
    run.set_defaults(func=_cmd_run)

    plan = sub.add_parser("plan", help="budget (N, k) for a target RMS error")
    plan.add_argument("delta", type=float)
    plan.add_argument("c_syst", type=float)
    plan.add_argument("c_rand", type=float)
    plan.add_argument("d", type=int)
    plan.set_defaults(func=_cmd_plan)

    dump = sub.add_parser("dump-env",
                          help="write one realization's edges as CSV")
    dump.add_argument("config")
    dump.add_argument("--point", type=int,
                      help="sweep point (default: first)")
    dump.add_argument("--seed", type=int)
    dump.add_argument("--output", default="edges.csv")
    dump.set_defaults(func=_cmd_dump)

    fit = sub.add_parser("fit",
                         help="re-fit error rates from an existing results CSV")
    fit.add_argument("results")
    fit.set_defaults(func=_cmd_fit)
    return parser


def _print_fits(fits, path):
    for name, (f, _) in sorted(fits.items()):
        print(f"{name}: rate={f.rate:.4f} prefactor={f.prefactor:.4g} "
              f"residual_rms={f.residual_rms:.4f}")
    if fits:
        print(f"wrote {path}")


def _cmd_run(args):
    overrides = {"seed": args.seed, "workers": args.workers,
                 "output": args.output, "tol": args.tol}
    cfg = parse_config(args.config, overrides)

    def progress(row):
        print(f"point={row.point} k={row.k} mean={row.mean:.6g} "
              f"std_error={row.std_error:.3g} warnings={row.warnings} "
              f"({row.wall_time_s:.1f}s)")

    rows = run_experiment(cfg, progress=progress)
    write_results_csv(rows, cfg.output)
    print(f"wrote {cfg.output}")
    fits = compute_fits(rows)
    if fits:
        sidecar = cfg.output + ".fits.csv"
        write_fits_csv(fits, sidecar)
        _print_fits(fits, sidecar)


def _cmd_plan(args):
    plan = plan_budget(args.delta, args.c_syst, args.c_rand, args.d)
    print(f"delta={plan.delta} c_syst={plan.c_syst} c_rand={plan.c_rand} "
          f"d={plan.d}")
    print(f"N_delta = {plan.n_delta}")
    print(f"k_delta = {plan.k_delta}")
    print(f"cost proxy k*N^d = {plan.predicted_cost_proxy}")


def _cmd_dump(args):
    cfg = parse_config(args.config, {"seed": args.seed})
    point = args.point if args.point is not None else cfg.sweep[0]
    if point not in cfg.sweep:
        raise ConfigurationError(
            f"--point {point} not in the sweep {cfg.sweep}")
    pidx = cfg.sweep.index(point)
    seed = rng.derive_key(cfg.seed, pidx, 0)
    if cfg.spec.structure.__class__.__name__ == "PeriodicCell":
        env = explicit_cell_environment(cfg.spec)
    elif cfg.method == "period-law":
        env = sample_periodic_law(cfg.spec, point, seed)
    elif cfg.method == "period-space":
        env = periodize_space(sample_box(cfg.spec, point, seed))
    else:
        env = sample_box(cfg.spec, point, seed)
    rows = write_edges_csv(env, args.output)
    print(f"wrote {args.output} ({rows} edges, realization 0 at "
          f"point {point})")


def _cmd_fit(args):
    rows = read_results_csv(args.results)
    fits = compute_fits(rows)
    if not fits:
        raise ConfigurationError(
            f"{args.results}: need >= 3 points with positive errors to fit")
    sidecar = args.results + ".fits.csv"
    write_fits_csv(fits, sidecar)
    _print_fits(fits, sidecar)


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        args.func(args)
        return 0
    except (ConfigurationError, CapabilityError, InsufficientDataError,
            DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
