"""Command line: ``regdyn {selftest, fit-identity, run lv, run dw, sweep, plot}``.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure,
3 failed self-test.
"""
from __future__ import annotations

import argparse
import os
import sys
import warnings

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_SELFTEST = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="config file (dotted key = literal per line)")
    p.add_argument("--out", metavar="DIR", default="results", help="output directory (default: results)")
    p.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
    p.add_argument("--paper-scale", action="store_true", help="full-size double-well preset (M=36, T=12)")
    p.add_argument("--threads", type=int, help="worker processes (overrides REGDYN_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regdyn", description="Regularized dynamical parametric approximation.")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("selftest", help="run the least-squares property suites"))
    _common(sub.add_parser("fit-identity", help="fit the Lotka-Volterra network to the identity"))
    run = sub.add_parser("run", help="run an experiment sweep")
    run.add_argument("experiment", choices=("lv", "dw"))
    _common(run)
    _common(sub.add_parser("sweep", help="one-axis sweep as set by the sweep.* config keys"))
    plot = sub.add_parser("plot", help="SVG plot of two CSV columns")
    plot.add_argument("csv")
    plot.add_argument("--x", required=True)
    plot.add_argument("--y", required=True)
    plot.add_argument("--group")
    plot.add_argument("--linear-x", action="store_true")
    plot.add_argument("--linear-y", action="store_true")
    plot.add_argument("--title", default="")
    _common(plot)
    return parser


def _load(args):
    from .harness import config

    cfg = config.load(args.config, args.paper_scale)
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    if args.threads is not None:
        if args.threads < 0:
            raise config.ConfigError("--threads must be nonnegative")
        cfg["run"]["threads"] = args.threads
    return cfg


def _threads(cfg) -> int:
    from .harness.parallel import resolve_threads

    return resolve_threads(cfg["run"]["threads"])


def cmd_selftest(args) -> int:
    from .harness.selftest import run_selftest

    return EXIT_OK if run_selftest() else EXIT_SELFTEST


def cmd_fit_identity(args) -> int:
    from .harness.csvio import write_rows
    from .harness.lv import identity_params

    cfg = _load(args)
    if cfg["lv"]["params"]:
        cfg["lv"]["params"] = ""
    os.makedirs(args.out, exist_ok=True)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        _, fit = identity_params(cfg, args.out)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_rows(os.path.join(args.out, "fit_identity.csv"), ["step", "identity_error"],
               [{"step": i, "identity_error": e} for i, e in enumerate(fit.errors)])
    print(f"identity error {fit.initial_error:.6g} -> {fit.error:.6g}; parameters in "
          f"{os.path.join(args.out, 'lv_params.csv')}")
    return EXIT_NUMERICAL if fit.failed else EXIT_OK


def _summary(rows, keys) -> None:
    for r in rows:
        flag = " FAILED" if r["failed"] else ""
        print("  ".join(f"{k}={r[k]:.4g}" if isinstance(r[k], float) else f"{k}={r[k]}" for k in keys) + flag)


def cmd_run(args) -> int:
    cfg = _load(args)
    threads = _threads(cfg)
    if args.experiment == "lv":
        from .harness.lv import run_lv_experiment

        res = run_lv_experiment(cfg, args.out, threads)
        _summary(res["h_rows"] + res["eps_rows"], ("eps", "h", "error", "defect_max"))
        if res["fit"] is not None and res["fit"].failed:
            return EXIT_NUMERICAL
    else:
        from .harness.dw import run_dw_experiment

        res = run_dw_experiment(cfg, args.out, threads)
        _summary(res["rows"], ("eps", "h", "energy_error", "mass_error", "ref_error"))
    print(f"results in {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .harness.sweep import run_sweep

    cfg = _load(args)
    res = run_sweep(cfg, args.out, _threads(cfg))
    _summary(res["rows"], ("eps", "h", "defect_max"))
    print(f"results in {os.path.join(args.out, 'sweep.csv')}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .harness.plot import PlotSpec, emit_plot

    out = args.out if args.out.endswith(".svg") else os.path.join(args.out, "plot.svg")
    if os.path.dirname(out):
        os.makedirs(os.path.dirname(out), exist_ok=True)
    emit_plot(args.csv, PlotSpec(args.x, args.y, args.group, not args.linear_x, not args.linear_y, args.title), out)
    print(out)
    return EXIT_OK


COMMANDS = {"selftest": cmd_selftest, "fit-identity": cmd_fit_identity, "run": cmd_run, "sweep": cmd_sweep,
            "plot": cmd_plot}


def main(argv=None) -> int:
    from .harness.config import ConfigError
    from .harness.plot import PlotError

    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, PlotError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
