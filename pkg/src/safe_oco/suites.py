"""Seeded probabilistic checks on the box setup, shared by ``safe-oco verify`` and the tests.

Every suite returns a list of :class:`CheckRecord` rows; a suite holds when
all its rows hold.
"""

from __future__ import annotations

import math

import numpy as np

from . import rng as rngmod
from .algorithm import t0_rule
from .config import ExperimentSpec, canonical_key, pick_baseline, resolve
from .estimation import build_conservative_set, confidence_radius, naive_polytope
from .exploration import BaselineSpec, choose_gamma, generate_exploration, sigma_zeta_sq, zeta_scale_for
from .geometry import AmbientSet, ShrunkPolytope, TruePolytope, contains_many
from .projection import project_conservative
from .verification import (
    CheckRecord,
    check_nesting,
    check_t0_conditions,
    event_frequencies,
    exploration_trial,
    grid_project_oracle,
    grid_resolution,
    shrink_margin,
)

BOX_T0 = 10_000  # exploration length of the reference box experiment


def box_setup(x_max: float = 3.0) -> tuple[TruePolytope, AmbientSet]:
    return TruePolytope.box(x_max, 2), AmbientSet.cube(x_max, 2)


def _baseline(p, amb, seed):
    return pick_baseline(p, amb, "random", 0.5, seed)


def exploration_safety(n_seeds: int, master_seed: int = 0, T0: int = BOX_T0) -> list[CheckRecord]:
    """Every exploration action of every seed lies in the true safe set (exact comparison)."""
    p, amb = box_setup()
    out = []
    for seed in range(master_seed, master_seed + n_seeds):
        base = BaselineSpec.from_polytope(p, _baseline(p, amb, seed))
        gamma = choose_gamma(base, p.L_A, amb)
        X = generate_exploration(base.x_s, gamma, zeta_scale_for(amb.L), T0, rngmod.stream(seed, "explore"))
        bad = int(np.sum(~contains_many(p, amb, X)))
        out.append(CheckRecord("exploration_safety", seed, bad, 0, bad == 0))
    return out


def nesting(n_seeds: int, master_seed: int = 0, T0: int = 2155, n_samples: int = 100_000,
            delta: float = 1e-3, lam: float = 0.5) -> list[CheckRecord]:
    """Shrunk set inside conservative set inside true set, plus naive-estimate escapes."""
    p, amb = box_setup()
    out = []
    escapes = 0
    for seed in range(master_seed, master_seed + n_seeds):
        tr = exploration_trial(p, amb, _baseline(p, amb, seed), T0, seed, lam=lam, delta=delta)
        cs = build_conservative_set(tr.estimate, tr.beta, p.b, amb)
        tau = shrink_margin(tr.beta, amb.L, tr.lambda_min)
        shrunk = ShrunkPolytope(p, tau)
        g = rngmod.stream(seed, "verify")
        rep = check_nesting(p, cs, shrunk, n_samples, g, coverage=tr.coverage)
        naive = check_nesting(p, naive_polytope(tr.estimate, p.b), shrunk, n_samples, g, ambient=amb)
        ok_cov = not tr.coverage
        out.append(CheckRecord("nesting_shrunk_in_conservative", seed,
                               rep.violations_shrunk_not_conservative, 0,
                               ok_cov or rep.violations_shrunk_not_conservative == 0))
        out.append(CheckRecord("nesting_conservative_in_true", seed,
                               rep.violations_conservative_not_true, 0,
                               ok_cov or rep.violations_conservative_not_true == 0))
        out.append(CheckRecord("coverage_event", seed, float(tr.coverage), 1, True))
        escapes += naive.violations_conservative_not_true > 0
    out.append(CheckRecord("naive_polytope_escapes", f"{master_seed}+{n_seeds}", escapes, 1, escapes >= 1))
    return out


def _trials(n: int, master_seed: int, T0: int, delta: float):
    p, amb = box_setup()
    return [
        exploration_trial(p, amb, _baseline(p, amb, s), T0, s, delta=delta)
        for s in range(master_seed, master_seed + n)
    ]


def coverage(n_trials: int, master_seed: int = 0, T0: int = 2155, delta: float = 0.05) -> list[CheckRecord]:
    f = event_frequencies(_trials(n_trials, master_seed, T0, delta))
    return [CheckRecord("coverage_frequency", f"{master_seed}+{n_trials}", f["coverage"], 1 - delta,
                        f["coverage"] >= 1 - delta)]


def eig_t0(delta: float = 0.05) -> int:
    """Smallest exploration length meeting the eigenvalue-bound precondition on the box setup.

    The gap of a baseline drawn from the inner half box is at least 1.5, so
    gamma hits its ceiling and the precondition does not depend on the seed.
    """
    p, amb = box_setup()
    base = BaselineSpec.from_polytope(p, np.zeros(2))
    gamma = choose_gamma(base, p.L_A, amb)
    s2 = sigma_zeta_sq(2, zeta_scale_for(amb.L))
    return int(math.ceil(8.0 * amb.L**2 / (gamma**2 * s2) * math.log(2 / delta)))


def eigmin(n_trials: int, master_seed: int = 0, delta: float = 0.05, T0: int | None = None) -> list[CheckRecord]:
    T0 = eig_t0(delta) if T0 is None else T0
    f = event_frequencies(_trials(n_trials, master_seed, T0, delta))
    tag = f"{master_seed}+{n_trials}"
    return [
        CheckRecord("eigmin_frequency", tag, f["eigmin"], 1 - delta, f["eigmin"] >= 1 - delta),
        CheckRecord("eigmin_frequency_given_coverage", tag, f["eigmin_given_coverage"], 1 - delta,
                    not f["eigmin_given_coverage"] < 1 - delta),
    ]


def t0_conditions(T: int = 1_000_000, seeds=range(6), delta: float = 1e-3) -> list[CheckRecord]:
    """Resolved exploration length against both minimum lengths, per baseline draw."""
    p, amb = box_setup()
    T0 = t0_rule(T)
    out = []
    for seed in seeds:
        base = BaselineSpec.from_polytope(p, _baseline(p, amb, seed))
        gamma = choose_gamma(base, p.L_A, amb)
        s2 = sigma_zeta_sq(2, zeta_scale_for(amb.L))
        beta_T = confidence_radius(R=math.sqrt(1e-3), d=2, T0=T, L=amb.L, lam=0.5, delta=delta,
                                   m=p.m, L_A=p.L_A)
        chern, cover = check_t0_conditions(L=amb.L, gamma=gamma, sigma_zeta_sq=s2, d=2, delta=delta,
                                             beta_T=beta_T, delta_s=base.delta_s)
        out.append(CheckRecord("t0_vs_chernoff_bound", seed, T0, chern, T0 >= chern))
        out.append(CheckRecord("t0_vs_cover_bound", seed, T0, cover, T0 >= cover))
    return out


def projection_checks(n_instances: int = 200, n_pairs: int = 1000, master_seed: int = 0,
                      T0: int = 200) -> list[CheckRecord]:
    """Solver against the grid oracle, plus non-expansiveness and idempotence."""
    p, amb = box_setup()
    bounds = (amb.box_lower, amb.box_upper)
    tol = 1e-4 + grid_resolution(bounds)
    worst = 0.0
    sets = []
    for k in range(n_instances):
        seed = master_seed + k
        g = rngmod.stream(seed, "verify")
        tr = exploration_trial(p, amb, _baseline(p, amb, seed), T0, seed)
        # inflate beta so the curved faces are clearly visible on the grid
        cs = build_conservative_set(tr.estimate, tr.beta * g.uniform(1.0, 5.0), p.b, amb)
        sets.append(cs)
        z = g.uniform(-5.0, 5.0, 2)
        x = project_conservative(cs, z).point
        o = grid_project_oracle(cs.contains_many, z, bounds)
        worst = max(worst, float(np.linalg.norm(x - o)))
    out = [CheckRecord("projection_vs_grid_oracle", f"{master_seed}+{n_instances}", worst, tol, worst <= tol)]
    g = rngmod.stream(master_seed, "verify")
    worst_ne = -math.inf
    worst_id = 0.0
    for k in range(n_pairs):
        cs = sets[k % len(sets)]
        z1, z2 = g.uniform(-6.0, 6.0, (2, 2))
        x1 = project_conservative(cs, z1).point
        x2 = project_conservative(cs, z2).point
        worst_ne = max(worst_ne, float(np.linalg.norm(x1 - x2) - np.linalg.norm(z1 - z2)))
        worst_id = max(worst_id, float(np.linalg.norm(project_conservative(cs, x1).point - x1)))
    tag = f"{master_seed}+{n_pairs}"
    out.append(CheckRecord("projection_nonexpansive_excess", tag, worst_ne, 2e-4, worst_ne <= 2e-4))
    out.append(CheckRecord("projection_idempotence", tag, worst_id, 1e-6, worst_id <= 1e-6))
    return out


SUITES = {
    "exploration_safety": lambda quick, seed: exploration_safety(10 if quick else 100, seed),
    "nesting": lambda quick, seed: nesting(10 if quick else 100, seed, n_samples=20_000 if quick else 100_000),
    "coverage": lambda quick, seed: coverage(100 if quick else 1000, seed),
    "eigmin": lambda quick, seed: eigmin(100 if quick else 1000, seed),
    "t0_conditions": lambda quick, seed: t0_conditions(),
    "projection": lambda quick, seed: projection_checks(20 if quick else 200, 100 if quick else 1000, seed),
}


def preset_spec(name: str, out_dir, overrides: dict | None = None) -> ExperimentSpec:
    """A preset with dotted-key overrides, e.g. ``{"run.T": 1000}``."""
    values = resolve(name, None, {canonical_key(k): v for k, v in (overrides or {}).items()})
    return ExperimentSpec.from_values(values, out_dir)
