"""Seeded experiment sweeps and their CSV / SVG outputs.

Each trace CSV starts with one ``#`` comment line carrying the experiment
name, seed and a timestamp; everything after it is a deterministic function
of the configuration and the seed.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .algorithm import TRACE_COLUMNS, RegretTrace, run
from .config import ExperimentSpec
from .errors import AggregationError, OutputExistsError, SafeOCOError
from .geometry import vertices
from .svg import band_chart

log = logging.getLogger(__name__)

AGG_COLUMNS = ("t", "mean", "min", "max")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _stamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def csv_text(columns, rows, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment is not None:
        buf.write(f"# {comment} generated={_stamp()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def csv_body(text: str) -> str:
    """Drop the leading comment line(s)."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def guard(paths, force: bool) -> None:
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing and not force:
        raise OutputExistsError(f"refusing to overwrite {existing[0]} (pass --force)")


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def read_trace_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    if not rows:
        raise AggregationError(f"empty trace {path}")
    out = {}
    for col in TRACE_COLUMNS:
        if col not in rows[0]:
            raise AggregationError(f"{path} lacks column {col}")
        vals = [r[col] for r in rows]
        out[col] = np.array(vals) if col == "phase" else np.array(vals, dtype=float)
    return out


# ---------------------------------------------------------------------------
# aggregation


def aggregate(ts: list[np.ndarray], values: list[np.ndarray]) -> np.ndarray:
    """``(t, mean, min, max)`` rows over runs sharing one checkpoint schedule."""
    if not ts:
        raise AggregationError("no traces to aggregate")
    t0 = np.asarray(ts[0])
    for t in ts[1:]:
        if len(t) != len(t0) or not np.array_equal(np.asarray(t), t0):
            raise AggregationError("traces use different checkpoint schedules")
    V = np.vstack(values)
    return np.column_stack([t0, V.mean(axis=0), V.min(axis=0), V.max(axis=0)])


def emit_plot_data(traces: list[dict], out_dir, svg: bool = False, force: bool = False,
                   comment: str = "plot") -> dict[str, Path]:
    """Write ``plot_rt_over_t.csv`` / ``plot_rt_over_t23.csv`` (and SVGs when asked)."""
    out_dir = Path(out_dir)
    names = {"rt": out_dir / "plot_rt_over_t.csv", "rt23": out_dir / "plot_rt_over_t23.csv"}
    if svg:
        names["rt_svg"] = out_dir / "plot_rt_over_t.svg"
        names["rt23_svg"] = out_dir / "plot_rt_over_t23.svg"
    guard(names.values(), force)
    ts = [tr["t"] for tr in traces]
    a1 = aggregate(ts, [tr["regret_over_t"] for tr in traces])
    a2 = aggregate(ts, [tr["regret_over_t23"] for tr in traces])
    for key, agg in (("rt", a1), ("rt23", a2)):
        rows = [(int(r[0]), r[1], r[2], r[3]) for r in agg]
        write_text(names[key], csv_text(AGG_COLUMNS, rows, comment))
    if svg:
        write_text(names["rt_svg"], band_chart(a1[:, 0], a1[:, 1], a1[:, 2], a1[:, 3], "R(t)/t", "R(t)/t"))
        write_text(names["rt23_svg"], band_chart(a2[:, 0], a2[:, 1], a2[:, 2], a2[:, 3],
                                                 "R(t)/t^(2/3)", "R(t)/t^(2/3)"))
    return names


# ---------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    traces: dict[int, RegretTrace] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)

    @property
    def total_violations(self) -> int:
        return sum(tr.summary["violation_count"] for tr in self.traces.values())

    @property
    def ok(self) -> bool:
        return not self.failures and self.total_violations == 0

    def summary(self) -> dict:
        s = [tr.summary for tr in self.traces.values()]
        rt = [x["R_T"] for x in s]
        return {
            "experiment": self.spec.name,
            "scenario": self.spec.values["scenario.kind"],
            "T": self.spec.values["run.T"],
            "seeds": self.spec.seeds(),
            "completed": len(self.traces),
            "failed": {str(k): v for k, v in self.failures.items()},
            "total_violations": self.total_violations,
            "R_T_mean": float(np.mean(rt)) if rt else math.nan,
            "R_T_min": float(np.min(rt)) if rt else math.nan,
            "R_T_max": float(np.max(rt)) if rt else math.nan,
            "theory_condition_unmet_runs": sum(bool(x["theory_condition_unmet"]) for x in s),
            "t0_forced_runs": sum(bool(x["t0_forced"]) for x in s),
            "synthetic_prices": any(x["synthetic_prices"] for x in s),
            "c_lower": self.spec.values["scenario.c_lower"],
            "c_upper": self.spec.values["scenario.c_upper"],
            "checkpoints": "log-spaced",
            "runs": {str(x["seed"]): _jsonable(x) for x in s},
        }

    def summary_line(self) -> str:
        s = self.summary()
        cond = ("met" if s["theory_condition_unmet_runs"] == 0
                else f"UNMET in {s['theory_condition_unmet_runs']} run(s)")
        return (
            f"{s['experiment']}: {s['completed']}/{len(s['seeds'])} runs, "
            f"R_T mean {s['R_T_mean']:.6g} [min {s['R_T_min']:.6g}, max {s['R_T_max']:.6g}], "
            f"violations {s['total_violations']}, horizon condition {cond}"
            + (", synthetic prices" if s["synthetic_prices"] else "")
        )


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, float)):
            v = float(v)
            out[k] = v if math.isfinite(v) else str(v)
        elif isinstance(v, (np.integer,)):
            out[k] = int(v)
        elif isinstance(v, (np.bool_,)):
            out[k] = bool(v)
        else:
            out[k] = v
    return out


def run_seed(spec: ExperimentSpec, seed: int, keep_actions: bool = False) -> RegretTrace:
    env, scenario = spec.world(seed)
    tr = run(spec.run_config(seed), env, scenario)
    if not keep_actions:
        tr.actions = None
    return tr


def _worker(args):
    spec, seed = args
    try:
        return seed, run_seed(spec, seed), None
    except SafeOCOError as exc:
        return seed, None, f"{type(exc).__name__}: {exc}"


def planned_files(spec: ExperimentSpec, svg: bool = False) -> list[Path]:
    out = spec.output_dir
    files = [trace_path(spec, s) for s in spec.seeds()]
    files += [out / n for n in ("aggregate.csv", "plot_rt_over_t.csv", "plot_rt_over_t23.csv",
                                "explore_actions.csv", "polytope_vertices.csv",
                                "diagnostics.csv", "summary.json")]
    if svg:
        files += [out / "plot_rt_over_t.svg", out / "plot_rt_over_t23.svg"]
    return files


def trace_path(spec: ExperimentSpec, seed: int) -> Path:
    return spec.output_dir / f"trace_{spec.name}_seed{seed}.csv"


def run_experiment(spec: ExperimentSpec, force: bool = False, svg: bool = False,
                   threads: int = 1) -> ExperimentResult:
    """Run every seed, then write all outputs from a single collector."""
    guard(planned_files(spec, svg), force)
    result = ExperimentResult(spec)
    jobs = [(spec, s) for s in spec.seeds()]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_worker, jobs))
    else:
        outcomes = [_worker(j) for j in jobs]
    for seed, tr, err in outcomes:
        if err is not None:
            log.error("seed %d failed: %s", seed, err)
            result.failures[seed] = err
        else:
            result.traces[seed] = tr
    write_outputs(result, force=True, svg=svg)
    return result


def write_outputs(result: ExperimentResult, force: bool = False, svg: bool = False) -> None:
    spec = result.spec
    out = spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    for seed, tr in sorted(result.traces.items()):
        p = trace_path(spec, seed)
        write_text(p, csv_text(TRACE_COLUMNS, tr.rows(), f"experiment={spec.name} seed={seed}"))
        result.files.append(p)
    seeds = sorted(result.traces)
    if not seeds:
        write_text(out / "summary.json", json.dumps(result.summary(), indent=2) + "\n")
        return
    tag = f"experiment={spec.name} seeds={seeds[0]}..{seeds[-1]}"
    trs = [result.traces[s] for s in seeds]
    ts = [tr.t for tr in trs]
    a1 = aggregate(ts, [tr.regret_over_t for tr in trs])
    a2 = aggregate(ts, [tr.regret_over_t23 for tr in trs])
    viol = np.vstack([tr.violations for tr in trs]).max(axis=0)
    rows = [(int(a1[i, 0]), *a1[i, 1:], *a2[i, 1:], int(viol[i])) for i in range(len(a1))]
    cols = ("t", "rt_mean", "rt_min", "rt_max", "rt23_mean", "rt23_min", "rt23_max", "violations_max")
    write_text(out / "aggregate.csv", csv_text(cols, rows, tag))
    traces = [{"t": tr.t, "regret_over_t": tr.regret_over_t, "regret_over_t23": tr.regret_over_t23}
              for tr in trs]
    result.files += list(emit_plot_data(traces, out, svg=svg, force=True, comment=tag).values())

    first = trs[0]
    ex = first.exploration
    d, m = ex.actions.shape[1], ex.observations.shape[1]
    cols = ("t", *[f"x_{i + 1}" for i in range(d)], *[f"y_{i + 1}" for i in range(m)])
    rows = [(t + 1, *ex.actions[t], *ex.observations[t]) for t in range(ex.T0)]
    write_text(out / "explore_actions.csv", csv_text(cols, rows, f"experiment={spec.name} seed={seeds[0]}"))
    V = vertices(spec.polytope(), spec.ambient())
    write_text(out / "polytope_vertices.csv",
               csv_text(tuple(f"x_{i + 1}" for i in range(d)), [tuple(v) for v in V], tag))
    write_text(out / "diagnostics.csv", csv_text(("seed", "key", "value"), diagnostics_rows(result), tag))
    write_text(out / "summary.json", json.dumps(result.summary(), indent=2) + "\n")
    result.files += [out / n for n in ("aggregate.csv", "explore_actions.csv", "polytope_vertices.csv",
                                       "diagnostics.csv", "summary.json")]


def estimate_rows(seed: int, tr: RegretTrace) -> list[tuple]:
    rows = []
    est = tr.estimate
    for i in range(est.m):
        for j in range(est.d):
            rows.append((seed, f"a_hat_{i + 1}_{j + 1}", float(est.A_hat[i, j])))
    for i in range(est.d):
        for j in range(est.d):
            rows.append((seed, f"V_{i + 1}_{j + 1}", float(est.V[i, j])))
    return rows


def diagnostics_rows(result: ExperimentResult) -> list[tuple]:
    keys = ("beta", "beta_T", "gamma", "sigma_zeta_sq", "T0", "t0_rule", "t0_forced", "eta", "L", "G",
            "L_A", "delta_s", "horizon_ok", "min_horizon", "t0_cover_bound", "t0_cover_ok",
            "eig_t0_bound", "baseline_in_conservative_set", "projection_calls",
            "projection_fallbacks", "optimize_regret", "ogd_bound", "synthetic_prices")
    rows = []
    for seed, tr in sorted(result.traces.items()):
        rows += estimate_rows(seed, tr)
        rows += [(seed, k, tr.summary[k]) for k in keys]
    return rows
