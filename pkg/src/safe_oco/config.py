"""Experiment configuration: a flat ``key = value`` file with dotted sections.

Example::

    # box experiment, linear costs
    experiment.name = box_f1
    experiment.n_seeds = 6
    run.T = 100000
    constraint_matrix = [[1, 0], [-1, 0], [0, 1], [0, -1]]
    constraint_offsets = [3, 3, 3, 3]
    box_lower = [-3, -3]
    box_upper = [3, 3]
    scenario.kind = f1_linear
    scenario.c_lower = 0.5
    scenario.c_upper = 2.0

Values are Python literals (numbers, lists, quoted strings); bare words are
read as strings and ``true``/``false``/``none`` are accepted in any case.
Precedence is command-line overrides, then the file, then preset defaults.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .algorithm import RunConfig
from .environment import (
    DC_BASELINE,
    DC_LAMBDA,
    Environment,
    Scenario,
    canonical_kind,
    datacenter_polytope,
    load_lbmp_csv,
    make_datacenter,
    make_f1,
    make_f2,
    make_f3,
    synthetic_prices,
)
from .errors import ConfigurationError, ParseError
from .exploration import BaselineSpec
from .geometry import AmbientSet, TruePolytope, vertices

# key -> (type, default); None default means "unset"
SCHEMA: dict[str, tuple[type, object]] = {
    "experiment.name": (str, "experiment"),
    "experiment.n_seeds": (int, 1),
    "experiment.seed": (int, 0),
    "run.T": (int, 100_000),
    "run.delta": (float, 1e-3),
    "run.lambda": (float, 0.5),
    "run.T0": (int, None),
    "run.eta": (float, None),
    "run.L_A": (float, None),
    "run.n_checkpoints": (int, 200),
    "run.eps_opt": (float, 1e-8),
    "run.known_set": (bool, False),
    "run.t0_policy": (str, "rule"),
    "environment.constraint_matrix": (list, None),
    "environment.constraint_offsets": (list, None),
    "environment.box_lower": (list, None),
    "environment.box_upper": (list, None),
    "environment.noise_std": (float, math.sqrt(1e-3)),
    "environment.baseline": (object, "random"),
    "environment.baseline_shrink": (float, 0.5),
    "scenario.kind": (str, "f1_linear"),
    "scenario.c_lower": (float, 0.5),
    "scenario.c_upper": (float, 2.0),
    "scenario.lambda_dc": (float, DC_LAMBDA),
    "scenario.prices_path": (str, None),
}
_BARE = ("constraint_matrix", "constraint_offsets", "box_lower", "box_upper")

_BOX = {
    "environment.constraint_matrix": [[1, 0], [-1, 0], [0, 1], [0, -1]],
    "environment.constraint_offsets": [3, 3, 3, 3],
    "environment.box_lower": [-3, -3],
    "environment.box_upper": [3, 3],
}
PRESETS: dict[str, dict] = {
    "box_f1": {**_BOX, "experiment.name": "box_f1", "experiment.n_seeds": 6, "scenario.kind": "f1_linear"},
    "box_f2": {**_BOX, "experiment.name": "box_f2", "experiment.n_seeds": 6, "scenario.kind": "f2_quadratic"},
    "box_f3": {**_BOX, "experiment.name": "box_f3", "experiment.n_seeds": 6, "scenario.kind": "f3_resource"},
    "triangle_f3": {
        "experiment.name": "triangle_f3",
        "experiment.n_seeds": 6,
        "run.T": 10_000,
        "environment.constraint_matrix": [[1, 1], [-1, 0], [0, -1]],
        "environment.constraint_offsets": [1, 0, 0],
        "environment.box_lower": [0, 0],
        "environment.box_upper": [1, 1],
        "environment.baseline": [0.25, 0.25],
        "scenario.kind": "f3_resource",
    },
    "datacenter": {
        "experiment.name": "datacenter",
        "experiment.n_seeds": 1,
        "run.T": 10_000,
        "environment.constraint_matrix": datacenter_polytope().A.tolist(),
        "environment.constraint_offsets": datacenter_polytope().b.tolist(),
        "environment.box_lower": [0.0] * 5,
        "environment.box_upper": [30.0] * 5,
        "environment.baseline": [DC_BASELINE] * 5,
        "scenario.kind": "datacenter",
    },
}


def _coerce(key: str, raw, line: int | None = None):
    typ, _ = SCHEMA[key]
    try:
        if raw is None:
            return None
        if typ is bool:
            if isinstance(raw, str):
                low = raw.lower()
                if low in ("true", "yes", "1"):
                    return True
                if low in ("false", "no", "0"):
                    return False
                raise ValueError(raw)
            return bool(raw)
        if typ is int:
            v = float(raw)
            if v != int(v):
                raise ValueError(raw)
            return int(v)
        if typ is float:
            return float(raw)
        if typ is list:
            if not isinstance(raw, (list, tuple)):
                raise ValueError(raw)
            return list(raw)
        if typ is str:
            return str(raw)
        return raw
    except (TypeError, ValueError):
        msg = f"bad value {raw!r} for {key}"
        if line is not None:
            raise ParseError(msg, line=line) from None
        raise ConfigurationError(msg) from None


def _literal(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null", ""):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def canonical_key(key: str) -> str:
    key = key.strip()
    if key in _BARE:
        key = "environment." + key
    if key not in SCHEMA:
        raise ConfigurationError(f"unknown configuration key {key!r}")
    return key


def parse_config_text(text: str) -> dict:
    out: dict = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip() if not raw.lstrip().startswith("#") else ""
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line=n)
        k, v = line.split("=", 1)
        try:
            key = canonical_key(k)
        except ConfigurationError as exc:
            raise ParseError(str(exc), line=n) from None
        out[key] = _coerce(key, _literal(v), line=n)
    return out


def load_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file not found: {p}")
    return parse_config_text(p.read_text())


def parse_overrides(items) -> dict:
    """``["run.T=1000", ...]`` from the command line."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        key = canonical_key(k)
        out[key] = _coerce(key, _literal(v))
    return out


def resolve(preset: str | None = None, file_values: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge defaults, preset, file and overrides (later wins)."""
    values = {k: d for k, (_, d) in SCHEMA.items()}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    values.update(file_values or {})
    values.update(overrides or {})
    values["scenario.kind"] = canonical_kind(values["scenario.kind"])
    return values


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce a seeded sweep."""

    name: str
    values: dict = field(repr=False)
    n_seeds: int
    master_seed: int
    output_dir: Path

    def __post_init__(self) -> None:
        if self.n_seeds < 1:
            raise ConfigurationError("n_seeds must be at least 1")

    @classmethod
    def from_values(cls, values: dict, output_dir, master_seed: int | None = None) -> "ExperimentSpec":
        seed = values["experiment.seed"] if master_seed is None else master_seed
        spec = cls(values["experiment.name"], dict(values), int(values["experiment.n_seeds"]),
                   int(seed), Path(output_dir))
        spec.polytope()  # validate geometry early
        return spec

    def seeds(self) -> list[int]:
        return [self.master_seed + i for i in range(self.n_seeds)]

    def polytope(self) -> TruePolytope:
        v = self.values
        if v["environment.constraint_matrix"] is None or v["environment.constraint_offsets"] is None:
            raise ConfigurationError("constraint_matrix and constraint_offsets are required")
        return TruePolytope(np.array(v["environment.constraint_matrix"], dtype=float),
                            np.array(v["environment.constraint_offsets"], dtype=float))

    def ambient(self) -> AmbientSet:
        v = self.values
        if v["environment.box_lower"] is None or v["environment.box_upper"] is None:
            raise ConfigurationError("box_lower and box_upper are required")
        return AmbientSet(np.array(v["environment.box_lower"], dtype=float),
                          np.array(v["environment.box_upper"], dtype=float))

    def run_config(self, seed: int) -> RunConfig:
        v = self.values
        return RunConfig(
            T=v["run.T"], delta=v["run.delta"], lam=v["run.lambda"], R=v["environment.noise_std"],
            L_A=v["run.L_A"], rng_seed=seed, T0_override=v["run.T0"], eta_override=v["run.eta"],
            n_checkpoints=v["run.n_checkpoints"], eps_opt=v["run.eps_opt"],
            known_set=v["run.known_set"], t0_policy=v["run.t0_policy"],
        )

    def baseline(self, seed: int) -> np.ndarray:
        return pick_baseline(self.polytope(), self.ambient(), self.values["environment.baseline"],
                             self.values["environment.baseline_shrink"], seed)

    def world(self, seed: int) -> tuple[Environment, Scenario]:
        p, amb = self.polytope(), self.ambient()
        base = BaselineSpec.from_polytope(p, self.baseline(seed))
        env = Environment(p, amb, base, self.values["environment.noise_std"], seed)
        return env, build_scenario(self.values, amb, seed)


def pick_baseline(p: TruePolytope, amb: AmbientSet, choice, shrink: float, seed: int) -> np.ndarray:
    """An explicit point, or ``"random"``: uniform on the safe set contracted about its vertex mean.

    Contracting by ``shrink`` keeps the safety gap at least ``(1 - shrink)``
    times the gap of the vertex mean, so the exploration radius stays useful.
    """
    if not (isinstance(choice, str) and choice.lower() == "random"):
        x = np.asarray(choice, dtype=float)
        if x.shape != (p.d,):
            raise ConfigurationError(f"baseline must have {p.d} coordinates")
        if not (np.all(p.A @ x < p.b) and amb.contains(x)):
            raise ConfigurationError(f"baseline {x.tolist()} is not strictly inside the safe set")
        return x
    if not 0.0 < shrink < 1.0:
        raise ConfigurationError("baseline_shrink must lie in (0, 1)")
    V = vertices(p, amb)
    if len(V) == 0:
        raise ConfigurationError("safe set is empty; cannot draw a baseline")
    center = V.mean(axis=0)
    g = rngmod.stream(seed, "baseline")
    for _ in range(100_000):
        u = g.uniform(amb.box_lower, amb.box_upper)
        if np.all(p.A @ u <= p.b):
            return center + shrink * (u - center)
    raise ConfigurationError("could not sample a baseline inside the safe set")


def build_scenario(values: dict, amb: AmbientSet, seed: int) -> Scenario:
    kind = canonical_kind(values["scenario.kind"])
    T = values["run.T"]
    g = rngmod.stream(seed, "scenario")
    if kind == "f1_linear":
        return make_f1(g, values["scenario.c_lower"], values["scenario.c_upper"], amb.d, T, seed)
    if kind == "f2_quadratic":
        return make_f2(g, values["scenario.c_lower"], values["scenario.c_upper"], amb, T, seed)
    if kind == "f3_resource":
        return make_f3(g, amb.d, T, seed)
    path = values["scenario.prices_path"]
    prices = load_lbmp_csv(path) if path else synthetic_prices(T, seed)
    return make_datacenter(prices, values["scenario.lambda_dc"], T, amb, seed)
