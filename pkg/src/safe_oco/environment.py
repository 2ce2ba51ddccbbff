"""The simulated world: noisy constraint readings and the cost sequences.

All randomness in a scenario is drawn at construction, so a scenario is an
immutable table of per-round coefficients.  Prefix sums of those coefficients
give the cumulative cost of the first ``t`` rounds in closed form, which is
what the hindsight optimum needs.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .errors import DataError, InvalidInputError, ParseError
from .exploration import BaselineSpec
from .geometry import AmbientSet, TruePolytope

SCENARIO_KINDS = ("f1_linear", "f2_quadratic", "f3_resource", "datacenter")
_ALIASES = {"f1": "f1_linear", "f2": "f2_quadratic", "f3": "f3_resource", "dc": "datacenter"}

ZONES = ("genesee", "central", "north", "mohawk valley", "west")
LBMP_HEADER = ("timestamp", "zone", "lbmp_usd_per_mwh")
DATA_DIR_ENV = "SAFE_OCO_DATA_DIR"

DC_LAMBDA = 5.7720
DC_CAP = 30.0
DC_BUDGET = 100.0
DC_BASELINE = 5.0


def canonical_kind(kind: str) -> str:
    k = _ALIASES.get(kind.strip().lower(), kind.strip().lower())
    if k not in SCENARIO_KINDS:
        raise InvalidInputError(f"unknown scenario kind {kind!r}; choose from {SCENARIO_KINDS}")
    return k


# ---------------------------------------------------------------------------
# environment


class Environment:
    """True constraints plus a Gaussian noise stream for the readings ``A x + w``."""

    def __init__(
        self,
        polytope: TruePolytope,
        ambient: AmbientSet,
        baseline: BaselineSpec,
        noise_std: float,
        rng_seed: int,
    ) -> None:
        if polytope.d != ambient.d:
            raise InvalidInputError("polytope and ambient box differ in dimension")
        if not noise_std >= 0:
            raise InvalidInputError(f"noise_std must be non-negative, got {noise_std}")
        if not baseline.check(polytope):
            raise InvalidInputError("baseline image does not match A x_s")
        if not np.all(polytope.b - polytope.A @ baseline.x_s > 0):
            raise InvalidInputError("baseline is not strictly inside the true polytope")
        self.polytope = polytope
        self.ambient = ambient
        self.baseline = baseline
        self.noise_std = float(noise_std)
        self.rng_seed = int(rng_seed)
        self._rng = rngmod.stream(rng_seed, "noise")

    @property
    def m(self) -> int:
        return self.polytope.m

    @property
    def d(self) -> int:
        return self.polytope.d

    def observe(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise InvalidInputError(f"expected an action of dimension {self.d}, got {x.shape}")
        return self.polytope.A @ x + self.noise_std * self._rng.standard_normal(self.m)

    def observe_many(self, X) -> np.ndarray:
        """Rows of ``X`` in order; the stream advances exactly as repeated :meth:`observe`."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise InvalidInputError(f"expected actions of dimension {self.d}, got {X.shape[1]}")
        w = self._rng.standard_normal((X.shape[0], self.m))
        return X @ self.polytope.A.T + self.noise_std * w

    def violation(self, x) -> bool:
        """Strict: any negative safety margin counts."""
        return bool(np.any(self.polytope.b - self.polytope.A @ np.asarray(x, dtype=float) < 0))


def observe(env: Environment, x) -> np.ndarray:
    return env.observe(x)


# ---------------------------------------------------------------------------
# prefix objectives (cumulative cost of the first t rounds)


class LinearPrefix:
    """``sum_tau c_tau^T x + const``."""

    def __init__(self, count: int, coef: np.ndarray, const: float = 0.0) -> None:
        self.count = count
        self.linear_coef = coef
        self.const = const

    def value(self, x) -> float:
        return float(self.linear_coef @ x) + self.const

    def grad(self, x) -> np.ndarray:
        return self.linear_coef.copy()

    def hess(self, x) -> np.ndarray:
        d = self.linear_coef.shape[0]
        return np.zeros((d, d))

    def smoothness(self) -> float:
        # any positive step works for a linear cost; scale it to the gradient
        return max(float(np.linalg.norm(self.linear_coef)), 1.0)


class QuadraticPrefix:
    """``sum_tau 0.5 ||x - c_tau x_bar||^2`` from the sums of ``c`` and ``c^2``."""

    linear_coef = None

    def __init__(self, count: int, x_bar: np.ndarray, sum_c: float, sum_c2: float) -> None:
        self.count = count
        self.x_bar = x_bar
        self.sum_c = sum_c
        self.sum_c2 = sum_c2
        self._xx = float(x_bar @ x_bar)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(
            0.5 * self.count * (x @ x) - self.sum_c * (self.x_bar @ x) + 0.5 * self.sum_c2 * self._xx
        )

    def grad(self, x) -> np.ndarray:
        return self.count * np.asarray(x, dtype=float) - self.sum_c * self.x_bar

    def hess(self, x) -> np.ndarray:
        return self.count * np.eye(self.x_bar.shape[0])

    def smoothness(self) -> float:
        return float(self.count)


class DatacenterPrefix:
    """``sum_tau c_tau^T x + t lam (100 - sum_k 8 log(1 + 4 x_k))``."""

    linear_coef = None

    def __init__(self, count: int, sum_c: np.ndarray, lam: float, lower: np.ndarray) -> None:
        self.count = count
        self.sum_c = sum_c
        self.lam = lam
        self._lower = lower

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(
            self.sum_c @ x + self.count * self.lam * (100.0 - 8.0 * np.sum(np.log1p(4.0 * x)))
        )

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.sum_c - 32.0 * self.lam * self.count / (1.0 + 4.0 * x)

    def hess(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.diag(128.0 * self.lam * self.count / (1.0 + 4.0 * x) ** 2)

    def smoothness(self) -> float:
        return float(128.0 * self.lam * self.count / (1.0 + 4.0 * np.min(self._lower)) ** 2)


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Scenario:
    """A pre-drawn cost sequence ``f_1, ..., f_T``; rounds are 1-based."""

    kind: str
    T: int
    rng_seed: int
    params: dict
    G: float
    coef: np.ndarray  # per-round coefficients; shape depends on kind
    x_bar: np.ndarray | None = None
    synthetic: bool = False
    _cum: np.ndarray = field(init=False, repr=False)
    _cum2: np.ndarray | None = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.coef.setflags(write=False)
        cum = np.cumsum(self.coef, axis=0)
        cum2 = np.cumsum(self.coef**2) if self.kind == "f2_quadratic" else None
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_cum2", cum2)

    @property
    def d(self) -> int:
        return int(self.params["d"])

    def _check(self, t: int, x: np.ndarray) -> None:
        if not 1 <= t <= self.T:
            raise InvalidInputError(f"round {t} outside [1, {self.T}]")
        if x.shape != (self.d,):
            raise InvalidInputError(f"expected a point of dimension {self.d}, got {x.shape}")
        if self.kind == "datacenter" and np.any(x < 0):
            raise InvalidInputError("data-center power must be non-negative")

    def value(self, t: int, x) -> float:
        x = np.asarray(x, dtype=float)
        self._check(t, x)
        c = self.coef[t - 1]
        if self.kind == "f1_linear":
            return float(c * np.sum(x) + 1.0)
        if self.kind == "f2_quadratic":
            r = x - c * self.x_bar
            return float(0.5 * (r @ r))
        if self.kind == "f3_resource":
            return float(c @ x)
        lam = self.params["lambda_dc"]
        return float(c @ x + lam * (100.0 - 8.0 * np.sum(np.log1p(4.0 * x))))

    def grad(self, t: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._check(t, x)
        c = self.coef[t - 1]
        if self.kind == "f1_linear":
            return np.full(self.d, float(c))
        if self.kind == "f2_quadratic":
            return x - c * self.x_bar
        if self.kind == "f3_resource":
            return c.copy()
        return c - 32.0 * self.params["lambda_dc"] / (1.0 + 4.0 * x)

    def values(self, ts, X) -> np.ndarray:
        """Vectorised :meth:`value` for rounds ``ts`` and matching rows of ``X``."""
        ts = np.asarray(ts, dtype=np.int64)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if ts.shape[0] != X.shape[0]:
            raise InvalidInputError("rounds and points differ in count")
        if ts.size and (ts.min() < 1 or ts.max() > self.T):
            raise InvalidInputError(f"rounds outside [1, {self.T}]")
        c = self.coef[ts - 1]
        if self.kind == "f1_linear":
            return c * X.sum(axis=1) + 1.0
        if self.kind == "f2_quadratic":
            r = X - c[:, None] * self.x_bar[None, :]
            return 0.5 * np.einsum("ij,ij->i", r, r)
        if self.kind == "f3_resource":
            return np.einsum("ij,ij->i", c, X)
        if np.any(X < 0):
            raise InvalidInputError("data-center power must be non-negative")
        lam = self.params["lambda_dc"]
        return np.einsum("ij,ij->i", c, X) + lam * (100.0 - 8.0 * np.log1p(4.0 * X).sum(axis=1))

    def prefix(self, t: int):
        """Cumulative cost of rounds ``1..t`` as an objective for the hindsight optimum."""
        if not 1 <= t <= self.T:
            raise InvalidInputError(f"prefix length {t} outside [1, {self.T}]")
        d = self.d
        if self.kind == "f1_linear":
            return LinearPrefix(t, np.full(d, float(self._cum[t - 1])), float(t))
        if self.kind == "f2_quadratic":
            return QuadraticPrefix(t, self.x_bar, float(self._cum[t - 1]), float(self._cum2[t - 1]))
        if self.kind == "f3_resource":
            return LinearPrefix(t, np.array(self._cum[t - 1]))
        lower = np.asarray(self.params["box_lower"], dtype=float)
        return DatacenterPrefix(t, np.array(self._cum[t - 1]), self.params["lambda_dc"], lower)


def _box_corners(ambient: AmbientSet) -> np.ndarray:
    return ambient.corners()


def make_f1(
    rng: np.random.Generator, c_lower: float, c_upper: float, d: int, T: int, seed: int = 0
) -> Scenario:
    """``f_t(x) = c_t sum(x) + 1`` with ``c_t ~ U[c_lower, c_upper]``."""
    _check_range(c_lower, c_upper)
    _check_dims(d, T)
    c = rng.uniform(c_lower, c_upper, size=T)
    G = max(abs(c_lower), abs(c_upper)) * math.sqrt(d)
    params = {"d": d, "c_lower": c_lower, "c_upper": c_upper}
    return Scenario("f1_linear", T, seed, params, G, c)


def make_f2(
    rng: np.random.Generator,
    c_lower: float,
    c_upper: float,
    ambient: AmbientSet,
    T: int,
    seed: int = 0,
) -> Scenario:
    """``f_t(x) = 0.5 ||x - c_t x_bar||^2`` with ``||x_bar|| = 2.5``."""
    _check_range(c_lower, c_upper)
    d = ambient.d
    _check_dims(d, T)
    g = rng.standard_normal(d)
    while not np.any(g):
        g = rng.standard_normal(d)
    x_bar = 2.5 * g / np.linalg.norm(g)
    x_bar.setflags(write=False)
    c = rng.uniform(c_lower, c_upper, size=T)
    corners = _box_corners(ambient)
    # the norm is convex in both x and c, so the sup sits at a corner and an end of [c_lower, c_upper]
    G = max(
        float(np.max(np.linalg.norm(corners - cc * x_bar[None, :], axis=1)))
        for cc in (c_lower, c_upper)
    )
    params = {"d": d, "c_lower": c_lower, "c_upper": c_upper}
    return Scenario("f2_quadratic", T, seed, params, G, c, x_bar=x_bar)


def make_f3(rng: np.random.Generator, d: int, T: int, seed: int = 0) -> Scenario:
    """Linear cost ``c_t^T x`` with a growing random term, a negative drift and a sign flip."""
    _check_dims(d, T)
    t = np.arange(1, T + 1, dtype=float)
    width = t**0.1
    c1 = rng.uniform(-1.0, 1.0, size=(T, d)) * width[:, None]
    c2 = rng.uniform(-1.0, 0.0, size=(T, d))
    perm = rng.permutation(T) + 1
    c3 = np.where(perm % 2 == 0, 1.0, -1.0)
    c = c1 + c2 + c3[:, None]
    G = (T**0.1 + 2.0) * math.sqrt(d)
    return Scenario("f3_resource", T, seed, {"d": d}, G, c)


def make_datacenter(
    prices: "LbmpTable", lambda_dc: float, T: int, ambient: AmbientSet, seed: int = 0
) -> Scenario:
    """``c_t^T x + lam (100 - sum_k 8 log(1 + 4 x_k))`` with hourly zone prices ``c_t``."""
    if not lambda_dc > 0:
        raise InvalidInputError(f"lambda_dc must be positive, got {lambda_dc}")
    _check_dims(ambient.d, T)
    if prices.prices.shape[1] != ambient.d:
        raise DataError(f"price table has {prices.prices.shape[1]} zones, box has {ambient.d}")
    if prices.prices.shape[0] < T:
        raise DataError(f"price table has {prices.prices.shape[0]} rows, horizon needs {T}")
    if np.any(ambient.box_lower < 0):
        raise InvalidInputError("data-center box must lie in the non-negative orthant")
    c = np.array(prices.prices[:T], dtype=float)
    # per coordinate the barrier slope ranges over [32 lam / (1 + 4 hi), 32 lam / (1 + 4 lo)]
    s_hi = 32.0 * lambda_dc / (1.0 + 4.0 * ambient.box_lower)
    s_lo = 32.0 * lambda_dc / (1.0 + 4.0 * ambient.box_upper)
    worst = np.maximum(np.abs(c - s_hi[None, :]), np.abs(c - s_lo[None, :]))
    G = float(np.max(np.linalg.norm(worst, axis=1)))
    params = {
        "d": ambient.d,
        "lambda_dc": float(lambda_dc),
        "box_lower": ambient.box_lower.tolist(),
        "box_upper": ambient.box_upper.tolist(),
        "prices_source": prices.source,
    }
    return Scenario("datacenter", T, seed, params, G, c, synthetic=prices.synthetic)


def _check_range(c_lower: float, c_upper: float) -> None:
    if not c_lower <= c_upper:
        raise InvalidInputError(f"c_lower {c_lower} exceeds c_upper {c_upper}")


def _check_dims(d: int, T: int) -> None:
    if d < 1 or T < 1:
        raise InvalidInputError("d and T must be at least 1")


# ---------------------------------------------------------------------------
# price data


@dataclass(frozen=True)
class LbmpTable:
    timestamps: tuple
    prices: np.ndarray  # rows by time, columns in ZONES order
    synthetic: bool = False
    source: str = ""


def resolve_data_path(path) -> Path:
    """Relative paths are looked up under ``$SAFE_OCO_DATA_DIR`` when it is set."""
    p = Path(path)
    base = os.environ.get(DATA_DIR_ENV)
    if not p.is_absolute() and base and not p.exists():
        return Path(base) / p
    return p


def load_lbmp_csv(path) -> LbmpTable:
    """Read ``timestamp,zone,lbmp_usd_per_mwh`` rows into a time-by-zone matrix."""
    path = resolve_data_path(path)
    if not path.exists():
        raise DataError(f"price file not found: {path}")
    rows: dict[datetime, dict[int, float]] = {}
    first_line: dict[datetime, int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty price file", line=1)
        if tuple(h.strip().lower() for h in header) != LBMP_HEADER:
            raise ParseError(f"expected header {','.join(LBMP_HEADER)}", line=1)
        for rec in reader:
            line = reader.line_num
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != 3:
                raise ParseError(f"expected 3 fields, got {len(rec)}", line=line)
            ts_raw, zone_raw, price_raw = (f.strip() for f in rec)
            try:
                ts = datetime.fromisoformat(ts_raw)
            except ValueError:
                raise ParseError(f"bad timestamp {ts_raw!r}", line=line) from None
            zone = " ".join(zone_raw.lower().split())
            if zone not in ZONES:
                raise ParseError(f"unknown zone {zone_raw!r}", line=line)
            try:
                price = float(price_raw)
            except ValueError:
                raise ParseError(f"bad price {price_raw!r}", line=line) from None
            if not math.isfinite(price):
                raise ParseError(f"non-finite price {price_raw!r}", line=line)
            slot = rows.setdefault(ts, {})
            first_line.setdefault(ts, line)
            k = ZONES.index(zone)
            if k in slot:
                raise DataError(f"line {line}: duplicate entry for ({ts_raw}, {zone_raw})")
            slot[k] = price
    if not rows:
        raise DataError(f"no price rows in {path}")
    stamps = sorted(rows)
    out = np.empty((len(stamps), len(ZONES)))
    for i, ts in enumerate(stamps):
        slot = rows[ts]
        if len(slot) != len(ZONES):
            missing = [ZONES[k] for k in range(len(ZONES)) if k not in slot]
            raise ParseError(f"timestamp {ts.isoformat()} lacks zones {missing}", line=first_line[ts])
        out[i] = [slot[k] for k in range(len(ZONES))]
    out.setflags(write=False)
    return LbmpTable(tuple(stamps), out, synthetic=False, source=str(path))


def synthetic_prices(T: int, seed: int, low: float = 10.0, high: float = 100.0) -> LbmpTable:
    """Seeded ``U[low, high]`` prices per zone-hour, used when no file is given."""
    prices = rngmod.stream(seed, "prices").uniform(low, high, size=(T, len(ZONES)))
    prices.setflags(write=False)
    return LbmpTable(tuple(range(T)), prices, synthetic=True, source="synthetic")


def datacenter_polytope(cap: float = DC_CAP, budget: float = DC_BUDGET, d: int = 5) -> TruePolytope:
    """Per-zone caps ``x_k <= cap`` plus a total budget ``sum x <= budget``."""
    A = np.vstack([np.eye(d), np.ones((1, d))])
    b = np.concatenate([np.full(d, cap), [budget]])
    return TruePolytope(A, b)
