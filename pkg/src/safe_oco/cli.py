"""``safe-oco`` command line: run, verify, plot, inspect."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import suites
from .algorithm import run
from .config import PRESETS, ExperimentSpec, load_config, parse_overrides, resolve
from .errors import SafeOCOError
from .harness import (
    csv_text,
    emit_plot_data,
    estimate_rows,
    guard,
    read_trace_csv,
    run_experiment,
    write_text,
)
from .verification import VERIFY_COLUMNS

log = logging.getLogger("safe_oco")


def _common() -> argparse.ArgumentParser:
    # accepted before or after the subcommand
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    p.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    p.add_argument("--force", action="store_true", default=argparse.SUPPRESS, help="overwrite outputs")
    p.add_argument("--svg", action="store_true", default=argparse.SUPPRESS, help="also write SVG charts")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="parallel runs")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value configuration file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="built-in experiment")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--T", type=int, help="horizon (same as --set run.T=...)")
    p.add_argument("--seeds", type=int, help="number of seeds (same as --set experiment.n_seeds=...)")
    p.add_argument("--known-set", action="store_true", help="ablation: true constraints, zero margin")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(
        prog="safe-oco", parents=[common],
        description="Safe online projected gradient descent under unknown linear constraints.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run a seeded experiment sweep")
    _config_args(p)

    p = sub.add_parser("verify", parents=[common], help="Monte-Carlo and brute-force property checks")
    p.add_argument("--checks", nargs="+", choices=sorted(suites.SUITES), default=sorted(suites.SUITES))
    p.add_argument("--quick", action="store_true", help="fewer seeds and samples")

    p = sub.add_parser("plot", parents=[common], help="aggregate trace CSVs into plot data")
    p.add_argument("traces", nargs="+", type=Path)

    p = sub.add_parser("inspect", parents=[common], help="dump the estimate of one seed")
    _config_args(p)
    return ap


def _values(args) -> dict:
    file_values = load_config(args.config) if args.config else None
    overrides = parse_overrides(args.overrides)
    if args.T is not None:
        overrides["run.T"] = args.T
    if args.seeds is not None:
        overrides["experiment.n_seeds"] = args.seeds
    if args.known_set:
        overrides["run.known_set"] = True
    if getattr(args, "seed", None) is not None:
        overrides["experiment.seed"] = args.seed
    preset = args.preset
    if preset is None and file_values is None:
        preset = "box_f1"
    return resolve(preset, file_values, overrides)


def cmd_run(args) -> int:
    values = _values(args)
    out = args.out or Path("results") / values["experiment.name"]
    spec = ExperimentSpec.from_values(values, out)
    result = run_experiment(spec, force=args.force, svg=args.svg, threads=args.threads)
    print(result.summary_line())
    for seed, err in sorted(result.failures.items()):
        print(f"  seed {seed} aborted: {err}", file=sys.stderr)
    print(f"outputs in {out}")
    return 0 if result.ok else 1


def cmd_verify(args) -> int:
    out = args.out or Path("results") / "verify"
    path = out / "verification.csv"
    guard([path], args.force)
    seed = args.seed or 0
    records = []
    for name in args.checks:
        recs = suites.SUITES[name](args.quick, seed)
        ok = all(r.holds for r in recs)
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        for r in recs:
            if not r.holds:
                print(f"      {r.check_name} seed={r.seed} value={r.value} bound={r.bound}")
        records += recs
    write_text(path, csv_text(VERIFY_COLUMNS, [r.row() for r in records], f"verify seed={seed}"))
    print(f"{sum(r.holds for r in records)}/{len(records)} checks hold; wrote {path}")
    return 0 if all(r.holds for r in records) else 1


def cmd_plot(args) -> int:
    out = args.out or args.traces[0].parent
    traces = [read_trace_csv(p) for p in args.traces]
    files = emit_plot_data(traces, out, svg=args.svg, force=args.force,
                           comment=f"plot of {len(traces)} trace(s)")
    for f in files.values():
        print(f)
    return 0


def cmd_inspect(args) -> int:
    values = _values(args)
    spec = ExperimentSpec.from_values(values, args.out or Path("."))
    seed = spec.master_seed
    env, scenario = spec.world(seed)
    tr = run(spec.run_config(seed), env, scenario)
    est = tr.estimate
    np.set_printoptions(precision=6, suppress=True)
    print(f"seed {seed}, T0 = {tr.summary['T0']}, gamma = {tr.summary['gamma']:.6g}, "
          f"beta = {tr.summary['beta']:.6g}")
    print("A_hat =\n", est.A_hat)
    print("A =\n", env.polytope.A)
    print("V =\n", est.V)
    print(f"lambda_min(V) = {est.lambda_min():.6g}")
    keys = ("horizon_ok", "min_horizon", "t0_cover_bound", "eig_t0_bound", "baseline_in_conservative_set",
            "violation_count", "R_T")
    print(json.dumps({k: tr.summary[k] for k in keys}, indent=2, default=str))
    if args.out:
        path = args.out / f"inspect_seed{seed}.csv"
        guard([path], args.force)
        rows = estimate_rows(seed, tr) + [(seed, "beta", tr.summary["beta"])]
        write_text(path, csv_text(("seed", "key", "value"), rows, f"inspect seed={seed}"))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name, default in (("seed", None), ("out", None), ("force", False), ("svg", False),
                          ("threads", 1), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "verify": cmd_verify, "plot": cmd_plot, "inspect": cmd_inspect}
    try:
        return handler[args.command](args)
    except SafeOCOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
