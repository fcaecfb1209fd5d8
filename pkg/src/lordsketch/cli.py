"""Command-line benchmark runner.

Subcommands::

    lordsketch toy        budget sweep on the ones-plus-identity operator
    lordsketch grid       synthetic family x diagonal-ratio recovery grid
    lordsketch stability  hyperparameter sweep of the joint solver
    lordsketch bounds     closed-form toy recovery bounds as CSV
    lordsketch single     one (matrix, method, recovery) cell
    lordsketch report     render figures from a results CSV

All experiment commands accept a flat ``key = value`` config file plus
command-line overrides, write one CSV row per cell, and are deterministic
in ``--master-seed``.  Exit codes: 0 ok, 1 runtime failure, 2 bad config.
"""

import argparse
import sys
from dataclasses import replace

from . import harness
from .sketch import ConfigError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _add_common(parser):
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--output", help="results CSV path")
    parser.add_argument("--workers", type=int, help="worker processes (default 1); "
                        f"env {harness.WORKERS_ENV_VAR} overrides")
    parser.add_argument("--master-seed", type=int, dest="master_seed")
    parser.add_argument("--samples", type=int)
    parser.add_argument("--n", type=int)


def _add_admm(parser):
    parser.add_argument("--eta", type=float, help="gradient step size")
    parser.add_argument("--lam", type=float, help="shrinkage threshold")
    parser.add_argument("--mu", type=float, help="momentum coefficient")
    parser.add_argument("--ema-decay", type=float, dest="ema_decay")
    parser.add_argument("--ema-tol", type=float, dest="ema_tol")
    parser.add_argument("--max-iters", type=int, dest="max_iters")
    parser.add_argument(
        "--momentum-kind", dest="momentum_kind", choices=["nesterov", "heavy_ball"]
    )


def _csv_list(text):
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lordsketch",
        description="Sketched low-rank-plus-diagonal recovery benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_toy = sub.add_parser("toy", help="budget sweep on the toy operator")
    _add_common(p_toy)
    _add_admm(p_toy)
    p_toy.add_argument("--budgets", type=lambda s: tuple(int(x) for x in _csv_list(s)))
    p_toy.add_argument("--methods", type=_csv_list)
    p_toy.add_argument("--recoveries", type=_csv_list)

    p_grid = sub.add_parser("grid", help="synthetic recovery grid")
    _add_common(p_grid)
    _add_admm(p_grid)
    p_grid.add_argument(
        "--families", type=lambda s: tuple(harness._parse_family_token(t) for t in _csv_list(s)),
        help="comma list like exp(0.5),poly(2)",
    )
    p_grid.add_argument("--xi", type=lambda s: tuple(float(x) for x in _csv_list(s)))
    p_grid.add_argument("--k", type=int)
    p_grid.add_argument("--budget", type=int)
    p_grid.add_argument("--methods", type=_csv_list)
    p_grid.add_argument("--recoveries", type=_csv_list)
    p_grid.add_argument("--allow-large", action="store_const", const=True,
                        dest="allow_large", default=None,
                        help="opt in to N > 500")

    p_stab = sub.add_parser("stability", help="hyperparameter stability sweep")
    _add_common(p_stab)
    p_stab.add_argument("--budget", type=int)
    p_stab.add_argument("--k", type=int)

    p_bounds = sub.add_parser("bounds", help="closed-form toy bounds table")
    p_bounds.add_argument("--n", type=int, default=200)
    p_bounds.add_argument("--k-max", type=int, dest="k_max", default=0)
    p_bounds.add_argument("--output")

    p_single = sub.add_parser("single", help="run one cell")
    _add_common(p_single)
    _add_admm(p_single)
    p_single.add_argument("--family", help="exp | poly | noise | toy")
    p_single.add_argument("--t", type=float)
    p_single.add_argument("--k", type=int)
    p_single.add_argument("--xi", type=float, dest="xi_single")
    p_single.add_argument("--budget", type=int)
    p_single.add_argument("--method")
    p_single.add_argument("--recovery")
    p_single.add_argument("--trace", dest="trace_path", help="dump solver trace CSV here")
    p_single.add_argument("--allow-large", action="store_const", const=True,
                          dest="allow_large", default=None)

    p_report = sub.add_parser("report", help="render figures from a results CSV")
    p_report.add_argument("csv", help="results CSV produced by an experiment command")
    p_report.add_argument("--outdir", help="directory for the PNGs (default: beside the CSV)")

    return parser


_CONFIG_KEYS = {
    "output",
    "workers",
    "master_seed",
    "samples",
    "n",
    "k",
    "k_max",
    "budget",
    "budgets",
    "families",
    "xi",
    "methods",
    "recoveries",
    "allow_large",
    "eta",
    "lam",
    "mu",
    "ema_decay",
    "ema_tol",
    "max_iters",
    "momentum_kind",
    "family",
    "t",
    "xi_single",
    "method",
    "recovery",
    "trace_path",
}


def _experiment_config(args):
    file_values = harness.load_config_file(args.config) if args.config else {}
    overrides = {
        key: getattr(args, key)
        for key in _CONFIG_KEYS
        if getattr(args, key, None) is not None
    }
    return harness.build_config(args.command, file_values, **overrides)


def _progress(done, total):
    sys.stderr.write(f"\r[{done} rows]")
    sys.stderr.flush()


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bounds":
            output = args.output or "bounds_results.csv"
            harness.run_bounds(args.n, args.k_max, output)
            print(output)
            return EXIT_OK
        if args.command == "report":
            from .report import render_report

            for path in render_report(args.csv, args.outdir):
                print(path)
            return EXIT_OK
        cfg = _experiment_config(args)
        if not cfg.output:
            cfg = replace(cfg, output=f"{args.command}_results.csv")
        if args.command == "single":
            report, _, rows = harness.run_single(cfg)
            with open(cfg.output, "w", newline="") as fh:
                harness.write_rows(rows, fh)
            print(
                f"rho_total={report.rho_total:.6g} rho_diag={report.rho_diag:.6g} "
                f"mvp_cost={report.mvp_cost} iterations={report.iterations} "
                f"runtime_s={report.runtime_s:.3f}"
            )
            print(cfg.output)
            return EXIT_OK
        rows = harness.run_experiment(cfg, progress=_progress)
        sys.stderr.write("\n")
        failed = sum(1 for row in rows if str(row["status"]).startswith("error"))
        print(f"{cfg.output} ({len(rows)} rows, {failed} failed cells)")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
