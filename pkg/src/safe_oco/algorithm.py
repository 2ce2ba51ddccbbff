"""Safe online projected gradient descent: explore, estimate, then optimise.

Phase 1 plays perturbed copies of the baseline for ``T0`` rounds and records
noisy constraint readings.  The ridge estimate and confidence radius then
define a conservative set, and phase 2 runs projected online gradient
descent on it.  Costs are charged at exactly ``T`` actions.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .environment import Environment, Scenario
from .errors import ConfigurationError, InfeasibleError, InvalidInputError
from .estimation import (
    ConservativeSafeSet,
    ExplorationLog,
    RlsEstimate,
    build_conservative_set,
    confidence_radius,
    exact_estimate,
    fit_rls,
)
from .exploration import choose_gamma, generate_exploration, sigma_zeta_sq, zeta_scale_for
from .geometry import contains_many
from .projection import (
    DEFAULT_EPS_OPT,
    HindsightSolver,
    Projector,
    project_conservative,
    system_for_conservative,
)

log = logging.getLogger(__name__)

EXPLORE, OPTIMIZE = "explore", "optimize"
TRACE_COLUMNS = (
    "t",
    "phase",
    "cum_cost",
    "regret_prefix",
    "regret_fixed",
    "regret_over_t",
    "regret_over_t23",
    "violations",
)


@dataclass(frozen=True)
class RunConfig:
    """Horizon, confidence and tuning knobs for one run.

    ``L``, ``G`` and ``L_A`` default to the bounds declared by the ambient box,
    the scenario and the true polytope.  ``t0_policy="cover"`` raises ``T0`` to
    the bound that guarantees the baseline sits inside the conservative set.
    """

    T: int
    delta: float = 1e-3
    lam: float = 0.5
    R: float = math.sqrt(1e-3)
    L: float | None = None
    G: float | None = None
    L_A: float | None = None
    rng_seed: int = 0
    T0_override: int | None = None
    eta_override: float | None = None
    checkpoint_schedule: tuple[int, ...] | None = None
    n_checkpoints: int = 200
    eps_opt: float = DEFAULT_EPS_OPT
    known_set: bool = False
    t0_policy: str = "rule"

    def __post_init__(self) -> None:
        if int(self.T) != self.T or self.T < 1:
            raise ConfigurationError(f"T must be a positive integer, got {self.T}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.lam > 0:
            raise ConfigurationError(f"lambda must be positive, got {self.lam}")
        if self.R < 0:
            raise ConfigurationError("R must be non-negative")
        for name in ("L", "G", "L_A", "eta_override"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigurationError(f"{name} must be positive, got {v}")
        if self.T0_override is not None and self.T0_override < 1:
            raise ConfigurationError("T0_override must be at least 1")
        if self.t0_policy not in ("rule", "cover"):
            raise ConfigurationError(f"t0_policy must be 'rule' or 'cover', got {self.t0_policy!r}")
        if self.checkpoint_schedule is not None:
            s = list(self.checkpoint_schedule)
            if not s or any(b <= a for a, b in zip(s, s[1:])) or s[0] < 1 or s[-1] > self.T:
                raise ConfigurationError("checkpoint schedule must increase within [1, T]")


@dataclass(frozen=True)
class HorizonInputs:
    """Problem constants that enter the minimum-horizon condition."""

    gamma: float
    sigma_zeta_sq: float
    delta_s: float
    d: int
    m: int
    L_A: float


@dataclass(frozen=True)
class Tuning:
    T0: int
    eta: float
    horizon_ok: bool | None
    t0_rule: int
    t0_forced: bool = False
    beta_T: float = math.nan
    min_horizon: float = math.nan  # (sqrt(8) beta_T L / (gamma sigma delta_s))^3
    t0_cover_bound: float = math.nan  # 8 beta_T^2 L^2 / (gamma sigma delta_s)^2
    t0_cover_ok: bool | None = None
    eig_t0_bound: float = math.nan  # 8 L^2 / (gamma sigma)^2 log(d / delta)

    def __iter__(self):
        return iter((self.T0, self.eta, self.horizon_ok))


def t0_rule(T: int) -> int:
    """``ceil(T^(2/3))`` in exact integer arithmetic: the least ``n`` with ``n^3 >= T^2``."""
    T = int(T)
    if T < 1:
        raise ConfigurationError("T must be at least 1")
    target = T * T
    n = max(1, int(round(T ** (2.0 / 3.0))))
    while n**3 < target:
        n += 1
    while n > 1 and (n - 1) ** 3 >= target:
        n -= 1
    return n


def resolve_tuning(cfg: RunConfig, horizon: HorizonInputs | None = None) -> Tuning:
    """Exploration length, step size and the theory checks that go with them."""
    if cfg.L is None or cfg.G is None:
        raise ConfigurationError("L and G must be resolved before tuning")
    rule = t0_rule(cfg.T)
    T0 = int(cfg.T0_override) if cfg.T0_override is not None else rule
    eta = cfg.eta_override if cfg.eta_override is not None else 2.0 * cfg.L / (cfg.G * math.sqrt(cfg.T))
    extra: dict = {}
    forced = False
    horizon_ok = None
    if horizon is not None:
        beta_T = confidence_radius(
            R=cfg.R, d=horizon.d, T0=cfg.T, L=cfg.L, lam=cfg.lam,
            delta=cfg.delta, m=horizon.m, L_A=horizon.L_A,
        )
        sig = math.sqrt(horizon.sigma_zeta_sq)
        denom = horizon.gamma * sig * horizon.delta_s
        if denom > 0:
            min_h = (math.sqrt(8.0) * beta_T * cfg.L / denom) ** 3
            cover = 8.0 * beta_T**2 * cfg.L**2 / denom**2
        else:
            min_h = cover = math.inf
        eig = (
            8.0 * cfg.L**2 / (horizon.gamma * sig) ** 2 * math.log(horizon.d / cfg.delta)
            if horizon.gamma > 0
            else math.inf
        )
        if cfg.t0_policy == "cover" and cfg.T0_override is None and T0 < cover:
            if math.isfinite(cover):
                T0 = int(math.ceil(cover))
                forced = True
        horizon_ok = bool(cfg.T >= min_h)
        extra = dict(
            beta_T=beta_T, min_horizon=min_h, t0_cover_bound=cover,
            t0_cover_ok=bool(T0 >= cover), eig_t0_bound=eig,
        )
    if T0 >= cfg.T:
        raise ConfigurationError(f"exploration length T0={T0} must be below the horizon T={cfg.T}")
    if not eta > 0:
        raise ConfigurationError("step size must be positive")
    return Tuning(T0=T0, eta=eta, horizon_ok=horizon_ok, t0_rule=rule, t0_forced=forced, **extra)


def default_checkpoints(T: int, T0: int, n: int = 200) -> tuple[int, ...]:
    """About ``n`` log-spaced rounds in ``[1, T]`` plus the phase boundary, ``2 T0`` and ``T``."""
    pts = np.unique(np.round(np.logspace(0.0, math.log10(T), max(n, 2))).astype(np.int64))
    extra = [T0, T0 + 1, 2 * T0, T]
    pts = np.union1d(pts, [e for e in extra if 1 <= e <= T])
    return tuple(int(p) for p in pts)


def ogd_step(x_t, grad, eta: float, target) -> np.ndarray:
    """``Pi(x_t - eta * grad)``; ``target`` is a conservative set or a :class:`Projector`."""
    z = np.asarray(x_t, dtype=float) - eta * np.asarray(grad, dtype=float)
    if isinstance(target, Projector):
        return target(z).point
    if isinstance(target, ConservativeSafeSet):
        return project_conservative(target, z).point
    raise InvalidInputError("target must be a ConservativeSafeSet or a Projector")


@dataclass
class RegretTrace:
    """Checkpointed cost, regret and violation counts of one run, plus diagnostics."""

    t: np.ndarray
    phase: list[str]
    cum_cost: np.ndarray
    regret_prefix: np.ndarray
    regret_fixed: np.ndarray
    violations: np.ndarray
    summary: dict = field(default_factory=dict)
    exploration: ExplorationLog | None = None
    estimate: RlsEstimate | None = None
    actions: np.ndarray | None = None

    @property
    def regret_over_t(self) -> np.ndarray:
        return self.regret_prefix / self.t

    @property
    def regret_over_t23(self) -> np.ndarray:
        return self.regret_prefix / self.t ** (2.0 / 3.0)

    @property
    def checkpoints(self) -> list[tuple]:
        return list(
            zip(self.t.tolist(), self.cum_cost.tolist(), self.regret_prefix.tolist(),
                self.violations.tolist(), self.phase)
        )

    def rows(self) -> list[tuple]:
        """Rows in :data:`TRACE_COLUMNS` order."""
        r_t, r_23 = self.regret_over_t, self.regret_over_t23
        return [
            (int(self.t[i]), self.phase[i], float(self.cum_cost[i]), float(self.regret_prefix[i]),
             float(self.regret_fixed[i]), float(r_t[i]), float(r_23[i]), int(self.violations[i]))
            for i in range(len(self.t))
        ]


def run(cfg: RunConfig, env: Environment, scenario: Scenario) -> RegretTrace:
    """Play ``T`` rounds and return the checkpointed trace."""
    start = time.perf_counter()
    if scenario.T < cfg.T:
        raise ConfigurationError(f"scenario covers {scenario.T} rounds, horizon is {cfg.T}")
    if scenario.d != env.d:
        raise ConfigurationError("scenario and environment differ in dimension")
    poly, amb, base = env.polytope, env.ambient, env.baseline
    d, m, T = env.d, env.m, cfg.T
    L = cfg.L if cfg.L is not None else amb.L
    G = cfg.G if cfg.G is not None else scenario.G
    L_A = cfg.L_A if cfg.L_A is not None else poly.L_A
    cfg_res = replace(cfg, L=L, G=G, L_A=L_A)

    gamma = choose_gamma(base, L_A, amb)
    zs = zeta_scale_for(L)
    s2 = sigma_zeta_sq(d, zs)
    tuning = resolve_tuning(cfg_res, HorizonInputs(gamma, s2, base.delta_s, d, m, L_A))
    T0, eta = tuning.T0, tuning.eta
    if tuning.horizon_ok is False:
        log.info("minimum-horizon condition unmet (needs T >= %.3g)", tuning.min_horizon)

    # phase 1: exploration
    X = generate_exploration(base.x_s, gamma, zs, T0, rngmod.stream(cfg.rng_seed, "explore"))
    Y = env.observe_many(X)
    explog = ExplorationLog(X, Y)

    # estimation, fit exactly once
    if cfg.known_set:
        est, beta = exact_estimate(poly, cfg.lam), 0.0
    else:
        est = fit_rls(explog, cfg.lam)
        beta = confidence_radius(
            R=cfg.R, d=d, T0=T0, L=L, lam=cfg.lam, delta=cfg.delta, m=m, L_A=L_A
        )
    cset = build_conservative_set(est, beta, poly.b, amb)
    projector = Projector(system_for_conservative(cset), cfg.eps_opt, interior_hint=base.x_s)
    baseline_inside = cset.contains(base.x_s)

    # phase 2: projected online gradient descent
    actions = np.empty((T, d))
    actions[:T0] = X
    try:
        x = projector(X[-1]).point
        for t in range(T0 + 1, T + 1):
            actions[t - 1] = x
            if t < T:
                x = projector(x - eta * scenario.grad(t, x)).point
    except InfeasibleError as exc:
        raise InfeasibleError(
            f"projection failed during the optimise phase (baseline inside set: {baseline_inside})",
            exc.best_slack,
        ) from exc

    costs = scenario.values(np.arange(1, T + 1), actions)
    cum = np.cumsum(costs)
    bad = ~contains_many(poly, None, actions)
    viol_cum = np.cumsum(bad)
    box_escapes = int(np.sum(~(np.all(actions >= amb.box_lower, axis=1) & np.all(actions <= amb.box_upper, axis=1))))

    # checkpoints and hindsight optima
    sched = cfg.checkpoint_schedule or default_checkpoints(T, T0, cfg.n_checkpoints)
    ts = np.asarray(sched, dtype=np.int64)
    solver = HindsightSolver(poly, amb, cfg.eps_opt)
    x_star_T = solver(scenario.prefix(T))
    reg_p = np.empty(len(ts))
    reg_f = np.empty(len(ts))
    for i, t in enumerate(ts):
        pre = scenario.prefix(int(t))
        x_star = x_star_T if t == T else solver(pre)
        reg_p[i] = cum[t - 1] - pre.value(x_star)
        reg_f[i] = cum[t - 1] - pre.value(x_star_T)

    # optimise-phase regret against the projected hindsight optimum
    x_hat = projector(x_star_T).point
    opt_regret = float(
        (cum[-1] - cum[T0 - 1])
        - (scenario.prefix(T).value(x_hat) - scenario.prefix(T0).value(x_hat))
    )
    summary = {
        "seed": int(cfg.rng_seed),
        "scenario": scenario.kind,
        "T": T,
        "T0": T0,
        "t0_rule": tuning.t0_rule,
        "t0_forced": tuning.t0_forced,
        "eta": eta,
        "gamma": gamma,
        "sigma_zeta_sq": s2,
        "beta": beta,
        "beta_T": tuning.beta_T,
        "L": L,
        "G": G,
        "L_A": L_A,
        "delta_s": base.delta_s,
        "horizon_ok": tuning.horizon_ok,
        "theory_condition_unmet": tuning.horizon_ok is False,
        "min_horizon": tuning.min_horizon,
        "t0_cover_bound": tuning.t0_cover_bound,
        "t0_cover_ok": tuning.t0_cover_ok,
        "eig_t0_bound": tuning.eig_t0_bound,
        "baseline_in_conservative_set": baseline_inside,
        "known_set": cfg.known_set,
        "R_T": float(reg_p[-1]) if ts[-1] == T else float(cum[-1] - scenario.prefix(T).value(x_star_T)),
        "violation_count": int(viol_cum[-1]),
        "explore_violations": int(viol_cum[T0 - 1]),
        "box_escapes": box_escapes,
        "x_star": x_star_T.tolist(),
        "x_hat_star": x_hat.tolist(),
        "optimize_regret": opt_regret,
        "ogd_bound": 2.0 * L * G * math.sqrt(T),
        "projection_calls": projector.calls,
        "projection_fallbacks": projector.fallbacks,
        "synthetic_prices": bool(getattr(scenario, "synthetic", False)),
        "wallclock": time.perf_counter() - start,
    }
    return RegretTrace(
        t=ts,
        phase=[EXPLORE if t <= T0 else OPTIMIZE for t in ts],
        cum_cost=cum[ts - 1],
        regret_prefix=reg_p,
        regret_fixed=reg_f,
        violations=viol_cum[ts - 1],
        summary=summary,
        exploration=explog,
        estimate=est,
        actions=actions,
    )
