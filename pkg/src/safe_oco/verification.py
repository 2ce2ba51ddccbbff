"""Brute-force and Monte-Carlo checks of the safety and estimation guarantees.

None of these routines share code paths with the solvers they check beyond
plain membership tests: nesting is judged by sampling, projections by a grid
search, and probability statements by repeated seeded explorations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng as rngmod
from .environment import Environment
from .errors import InfeasibleError, InvalidInputError
from .estimation import (
    ConservativeSafeSet,
    ExplorationLog,
    RlsEstimate,
    confidence_radius,
    coverage_holds,
    fit_rls,
)
from .exploration import BaselineSpec, choose_gamma, generate_exploration, sigma_zeta_sq, zeta_scale_for
from .geometry import AmbientSet, ShrunkPolytope, TruePolytope

VERIFY_COLUMNS = ("check_name", "seed", "value", "bound", "holds")


@dataclass(frozen=True)
class CheckRecord:
    """One row of ``verification.csv``."""

    check_name: str
    seed: int | str
    value: float
    bound: float
    holds: bool

    def row(self) -> tuple:
        return (self.check_name, self.seed, self.value, self.bound, self.holds)


# ---------------------------------------------------------------------------
# set nesting


@dataclass(frozen=True)
class NestingReport:
    samples: int
    in_shrunk: int
    in_conservative: int
    in_true: int
    violations_shrunk_not_conservative: int
    violations_conservative_not_true: int
    coverage: bool | None = None

    @property
    def clean(self) -> bool:
        return self.violations_shrunk_not_conservative == 0 and self.violations_conservative_not_true == 0


def _rows_member(s, X: np.ndarray) -> np.ndarray:
    """Membership judged on the constraint rows only (the ambient box is shared and known)."""
    if isinstance(s, ConservativeSafeSet):
        g = X @ s.estimate.A_hat.T - s.b
        if s.beta != 0.0:
            g = g + s.beta * s.estimate.v_inv_norm(X)[:, None]
        return np.all(g <= 0.0, axis=1)
    if isinstance(s, ShrunkPolytope):
        return np.all(X @ s.base.A.T + s.tau_in <= s.base.b, axis=1)
    if isinstance(s, TruePolytope):
        return np.all(X @ s.A.T <= s.b, axis=1)
    raise InvalidInputError(f"unsupported set type {type(s).__name__}")


def check_nesting(
    true_set: TruePolytope,
    conservative_set: ConservativeSafeSet | TruePolytope,
    shrunk_set: ShrunkPolytope,
    n_samples: int,
    rng: np.random.Generator,
    ambient: AmbientSet | None = None,
    pad: float = 0.25,
    coverage: bool | None = None,
) -> NestingReport:
    """Classify uniform samples against the shrunk, conservative and true sets.

    Samples come from the ambient box widened by ``pad`` times its span on
    every side, and each set is judged on its own constraint rows.  When the
    box coincides with the true polytope this is what makes an outward tilt of
    an estimated face observable at all.  ``conservative_set`` may also be a
    plain polytope, e.g. the naive plug-in estimate.
    """
    if n_samples < 1:
        raise InvalidInputError("n_samples must be positive")
    if ambient is None:
        if not isinstance(conservative_set, ConservativeSafeSet):
            raise InvalidInputError("ambient box required for a polytope estimate")
        ambient = conservative_set.ambient
    span = ambient.box_upper - ambient.box_lower
    lo, hi = ambient.box_lower - pad * span, ambient.box_upper + pad * span
    X = rng.uniform(lo, hi, size=(n_samples, ambient.d))
    ins = _rows_member(shrunk_set, X)
    inc = _rows_member(conservative_set, X)
    intr = _rows_member(true_set, X)
    return NestingReport(
        samples=n_samples,
        in_shrunk=int(ins.sum()),
        in_conservative=int(inc.sum()),
        in_true=int(intr.sum()),
        violations_shrunk_not_conservative=int(np.sum(ins & ~inc)),
        violations_conservative_not_true=int(np.sum(inc & ~intr)),
        coverage=coverage,
    )


def shrink_margin(beta: float, L: float, lambda_min: float) -> float:
    """``tau_in = 2 beta L / sqrt(lambda_min(V))``."""
    if not lambda_min > 0:
        raise InvalidInputError("lambda_min must be positive")
    return 2.0 * beta * L / math.sqrt(lambda_min)


# ---------------------------------------------------------------------------
# eigenvalue and exploration-length conditions


def check_eigmin(
    V, lam: float, gamma: float, sigma_zeta_sq: float, T0: int
) -> tuple[float, float, bool]:
    """``(lambda_min(V), lam + 0.5 gamma^2 sigma^2 T0, lambda_min >= bound)``."""
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise InvalidInputError(f"V must be square, got shape {V.shape}")
    scale = max(1.0, float(np.max(np.abs(V))))
    if float(np.max(np.abs(V - V.T))) > 1e-12 * scale:
        raise InvalidInputError("V is not symmetric")
    lmin = float(np.linalg.eigvalsh(V)[0])
    bound = lam + 0.5 * gamma**2 * sigma_zeta_sq * T0
    return lmin, bound, bool(lmin >= bound)


def check_t0_conditions(
    *,
    L: float,
    gamma: float,
    sigma_zeta_sq: float,
    d: int,
    delta: float,
    beta_T: float,
    delta_s: float,
) -> tuple[int, int]:
    """Minimum exploration lengths for the eigenvalue bound and for the baseline to be covered."""
    for name, v in (("L", L), ("gamma", gamma), ("sigma_zeta_sq", sigma_zeta_sq), ("beta_T", beta_T)):
        if not v > 0:
            raise InvalidInputError(f"{name} must be positive")
    if not 0.0 < delta < 1.0 or d < 1 or not delta_s > 0:
        raise InvalidInputError("need 0 < delta < 1, d >= 1 and delta_s > 0")
    g2s2 = gamma**2 * sigma_zeta_sq
    chernoff = 8.0 * L**2 / g2s2 * math.log(d / delta)
    cover = 8.0 * beta_T**2 * L**2 / (g2s2 * delta_s**2)
    return int(math.ceil(max(chernoff, 0.0))), int(math.ceil(cover))


# ---------------------------------------------------------------------------
# projection oracle


def _bisect(pred, inside: np.ndarray, outside: np.ndarray, iters: int = 60) -> np.ndarray:
    """Walk each (inside, outside) pair onto the boundary; returns the inside ends."""
    a, b = inside.copy(), outside.copy()
    for _ in range(iters):
        mid = 0.5 * (a + b)
        ok = pred(mid)
        a[ok] = mid[ok]
        b[~ok] = mid[~ok]
    return a


def _grid_stage(pred, z, lo, hi, n):
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    P = np.stack([gx.ravel(), gy.ravel()], axis=1)
    ok = pred(P).reshape(n, n)
    cands = [P[ok.ravel()]]
    # exact boundary crossings along grid lines remove the sawtooth bias of a pure grid
    for flip_axis in (0, 1):
        a = ok[:-1, :] if flip_axis == 0 else ok[:, :-1]
        b = ok[1:, :] if flip_axis == 0 else ok[:, 1:]
        edge = a != b
        if not np.any(edge):
            continue
        i, j = np.nonzero(edge)
        p1 = np.stack([gx[i, j], gy[i, j]], axis=1)
        i2, j2 = (i + 1, j) if flip_axis == 0 else (i, j + 1)
        p2 = np.stack([gx[i2, j2], gy[i2, j2]], axis=1)
        first_in = a[i, j]
        inside = np.where(first_in[:, None], p1, p2)
        outside = np.where(first_in[:, None], p2, p1)
        cands.append(_bisect(pred, inside, outside))
    C = np.vstack(cands)
    if len(C) == 0:
        return None, (hi - lo) / (n - 1)
    k = int(np.argmin(np.sum((C - z) ** 2, axis=1)))
    return C[k], (hi - lo) / (n - 1)


def grid_project_oracle(
    pred: Callable[[np.ndarray], np.ndarray],
    z,
    bounds: tuple,
    coarse_n: int = 400,
    refine_n: int = 400,
    window: float = 1.5,
    levels: int = 3,
) -> np.ndarray:
    """Nearest member of a 2-D set to ``z`` by a coarse grid and nested refinements.

    ``pred`` maps an ``(n, 2)`` array to a boolean membership mask.  Each
    stage also bisects every grid edge whose end points disagree, so boundary
    points are located to rounding accuracy along grid lines and the answer is
    within half a final cell of the true projection on smooth boundaries.
    Every refinement covers ``window`` cells of the previous grid around its
    best point.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (2,):
        raise InvalidInputError("grid oracle is two-dimensional only")
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    if np.all(z >= lo) and np.all(z <= hi) and bool(pred(z[None, :])[0]):
        return z.copy()
    best, cell = _grid_stage(pred, z, lo, hi, coarse_n)
    if best is None:
        raise InfeasibleError("no feasible grid point", math.nan)
    for _ in range(levels - 1):
        wlo = np.maximum(best - window * cell, lo)
        whi = np.minimum(best + window * cell, hi)
        fine, cell = _grid_stage(pred, z, wlo, whi, refine_n)
        if fine is not None and np.sum((fine - z) ** 2) <= np.sum((best - z) ** 2):
            best = fine
    return best


def grid_resolution(bounds: tuple, coarse_n: int = 400, refine_n: int = 400) -> float:
    span = float(np.max(np.asarray(bounds[1], float) - np.asarray(bounds[0], float)))
    return span / (coarse_n * refine_n)


# ---------------------------------------------------------------------------
# Monte-Carlo replicates of the exploration phase


@dataclass(frozen=True)
class ExplorationTrial:
    seed: int
    T0: int
    gamma: float
    sigma_zeta_sq: float
    beta: float
    coverage: bool
    lambda_min: float
    eig_bound: float
    estimate: RlsEstimate
    log: ExplorationLog

    @property
    def eig_holds(self) -> bool:
        return self.lambda_min >= self.eig_bound


def exploration_trial(
    p: TruePolytope,
    amb: AmbientSet,
    x_s,
    T0: int,
    seed: int,
    *,
    lam: float = 0.5,
    R: float = math.sqrt(1e-3),
    delta: float = 1e-3,
    L_A: float | None = None,
) -> ExplorationTrial:
    """One seeded exploration phase, its estimate and the coverage and eigenvalue events."""
    base = BaselineSpec.from_polytope(p, x_s)
    env = Environment(p, amb, base, R, seed)
    L_A = p.L_A if L_A is None else L_A
    gamma = choose_gamma(base, L_A, amb)
    zs = zeta_scale_for(amb.L)
    s2 = sigma_zeta_sq(p.d, zs)
    X = generate_exploration(base.x_s, gamma, zs, T0, rngmod.stream(seed, "explore"))
    log_ = ExplorationLog(X, env.observe_many(X))
    est = fit_rls(log_, lam)
    beta = confidence_radius(R=R, d=p.d, T0=T0, L=amb.L, lam=lam, delta=delta, m=p.m, L_A=L_A)
    lmin, bound, _ = check_eigmin(est.V, lam, gamma, s2, T0)
    return ExplorationTrial(
        seed=seed, T0=T0, gamma=gamma, sigma_zeta_sq=s2, beta=beta,
        coverage=coverage_holds(est, p.A, beta), lambda_min=lmin, eig_bound=bound,
        estimate=est, log=log_,
    )


def event_frequencies(trials: list[ExplorationTrial]) -> dict:
    """Unconditional frequencies, and the eigenvalue event conditioned on coverage."""
    n = len(trials)
    if n == 0:
        raise InvalidInputError("no trials")
    cov = np.array([t.coverage for t in trials])
    eig = np.array([t.eig_holds for t in trials])
    return {
        "trials": n,
        "coverage": float(cov.mean()),
        "eigmin": float(eig.mean()),
        "eigmin_given_coverage": float(eig[cov].mean()) if cov.any() else math.nan,
    }
