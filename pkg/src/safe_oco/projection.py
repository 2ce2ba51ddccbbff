"""Euclidean projection onto conservative safe sets and polytopes.

All target sets are written as ``g_j(x) <= -eps_feas`` with

    g_j(x) = c_j^T x + beta_j * sqrt(x^T W x + mu_s) - h_j

where ``W = V^{-1}``; box and polytope rows have ``beta_j = 0``.  Returned
points therefore sit ``eps_feas`` inside the set, which keeps them feasible
under last-digit rounding.

Two solvers are combined.  The fast path is an active-set Newton method on
the KKT system, warm-started from the previous active set; it terminates with
an explicit KKT certificate.  When it cannot certify a point, a damped-Newton
log-barrier method (barrier weight halved per outer iteration) is run from a
strictly feasible start, then polished by the active-set method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy import linalg

from . import _kernels
from .errors import ConvergenceError, InfeasibleError, InvalidInputError
from .estimation import ConservativeSafeSet
from .geometry import AmbientSet, TruePolytope, halfspaces, vertices

MU_SMOOTH = 1e-16
DEFAULT_EPS_OPT = 1e-8
MAX_OUTER = 200
MAX_INNER = 50


def feasibility_margin(b) -> float:
    """``1e-9 * max|b_i|`` (floored so an all-zero ``b`` still gets a margin)."""
    return max(1e-9 * float(np.max(np.abs(b))), 1e-12)


@dataclass(frozen=True)
class ProjectionResult:
    """Solver output; ``feasibility_slack`` is the largest exact constraint value (<= 0 when feasible)."""

    point: np.ndarray
    objective_gap: float
    feasibility_slack: float
    iterations: int
    active: tuple[int, ...] = ()
    method: str = "identity"


class Objective(Protocol):
    def value(self, x: np.ndarray) -> float: ...
    def grad(self, x: np.ndarray) -> np.ndarray: ...
    def hess(self, x: np.ndarray) -> np.ndarray: ...


class _Distance:
    """``0.5 ||x - z||^2``."""

    def __init__(self, z: np.ndarray) -> None:
        self.z = z
        self._eye = np.eye(z.shape[0])

    def value(self, x):
        r = x - self.z
        return 0.5 * float(r @ r)

    def grad(self, x):
        return x - self.z

    def hess(self, x):
        return self._eye


class ConstraintSystem:
    """Rows ``c_j^T x + beta_j n(x) - h_j`` plus a shared metric ``W``."""

    def __init__(
        self,
        C: np.ndarray,
        h: np.ndarray,
        beta: np.ndarray,
        W: np.ndarray | None,
        chol: np.ndarray | None,
        eps: float,
        n_unknown: int,
        diameter: float,
    ) -> None:
        self.C = np.ascontiguousarray(C, dtype=float)
        self.h = np.asarray(h, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        self.W = W
        self.chol = chol
        self.eps = float(eps)
        self.n_unknown = n_unknown
        self.diameter = diameter
        self.conic = bool(np.any(self.beta != 0.0)) and W is not None
        self.M, self.d = self.C.shape
        self._eye = np.eye(self.d)
        self._Wk = np.ascontiguousarray(W) if self.conic else np.zeros((self.d, self.d))

    def fast_values(self, x: np.ndarray, smoothed: bool = True) -> np.ndarray:
        """Compiled ``g(x)``; ``smoothed=False`` gives the exact conic norm."""
        return _kernels.constraint_values(
            self.C, self.h, self.beta, self._Wk, self.conic, x, smoothed
        )

    def smoothed_norm(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        Wx = self.W @ x
        return math.sqrt(float(x @ Wx) + MU_SMOOTH), Wx

    def values(self, x: np.ndarray) -> np.ndarray:
        """Solver-side ``g(x)``; the smoothed norm only ever over-estimates."""
        g = self.C @ x - self.h
        if self.conic:
            n, _ = self.smoothed_norm(x)
            g = g + self.beta * n
        return g

    def exact_values(self, x: np.ndarray) -> np.ndarray:
        g = self.C @ x - self.h
        if self.conic:
            sol = linalg.solve_triangular(self.chol, x, lower=True, check_finite=False)
            g = g + self.beta * float(np.linalg.norm(sol))
        return g

    def derivatives(self, x: np.ndarray):
        """Return ``g``, the Jacobian rows, and the un-weighted norm Hessian."""
        if not self.conic:
            return self.C @ x - self.h, self.C, None
        n, Wx = self.smoothed_norm(x)
        u = Wx / n
        g = self.C @ x - self.h + self.beta * n
        G = self.C + np.outer(self.beta, u)
        Hn = self.W / n - np.outer(u, u) / n
        return g, G, Hn


def system_for_conservative(s: ConservativeSafeSet) -> ConstraintSystem:
    est, amb = s.estimate, s.ambient
    d = est.d
    eye = np.eye(d)
    C = np.vstack([est.A_hat, eye, -eye])
    h = np.concatenate([s.b, amb.box_upper, -amb.box_lower])
    beta = np.concatenate([np.full(est.m, s.beta), np.zeros(2 * d)])
    W = None
    if s.beta != 0.0:
        W = linalg.cho_solve((est.V_chol, True), eye, check_finite=False)
        W = 0.5 * (W + W.T)
    diam = float(np.linalg.norm(amb.box_upper - amb.box_lower))
    return ConstraintSystem(
        C, h, beta, W, est.V_chol, feasibility_margin(s.b), est.m, max(diam, 1.0)
    )


def system_for_polytope(
    p: TruePolytope, amb: AmbientSet, eps: float | None = None
) -> ConstraintSystem:
    C, h = halfspaces(p, amb)
    diam = float(np.linalg.norm(amb.box_upper - amb.box_lower))
    if eps is None:
        eps = feasibility_margin(p.b)
    return ConstraintSystem(C, h, np.zeros(C.shape[0]), None, None, eps, p.m, max(diam, 1.0))


# --------------------------------------------------------------------------
# active-set Newton on the KKT system


def _kkt_newton(
    sys: ConstraintSystem,
    obj: Objective,
    S: list[int],
    x0: np.ndarray,
    max_iter: int = 30,
):
    """Solve ``grad f + G_S^T mu = 0, g_S + eps = 0``; return ``(x, mu, iters)`` or None."""
    x = x0.copy()
    k = len(S)
    d = sys.d
    if k > d:
        return None
    idx = np.asarray(S, dtype=int)
    beta_S = sys.beta[idx]
    mu = np.zeros(k)
    K = np.zeros((d + k, d + k))
    rhs = np.empty(d + k)
    scale = 1.0 + float(np.max(np.abs(sys.h)))
    first = True
    for it in range(1, max_iter + 1):
        g, G, Hn = sys.derivatives(x)
        GS = G[idx] if k else np.zeros((0, d))
        gf = obj.grad(x)
        if first and k:
            # multipliers from the stationarity residual at the start point
            mu = np.linalg.lstsq(GS.T, -gf, rcond=None)[0]
            first = False
        H = obj.hess(x)
        if Hn is not None and k:
            H = H + float(mu @ beta_S) * Hn
        r1 = gf + GS.T @ mu
        r2 = g[idx] + sys.eps
        K[:d, :d] = H
        K[:d, d:] = GS.T
        K[d:, :d] = GS
        rhs[:d] = -r1
        rhs[d:] = -r2
        try:
            step = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)):
            return None
        dx = step[:d]
        x = x + dx
        mu = mu + step[d:]
        if float(np.max(np.abs(dx), initial=0.0)) <= 1e-13 * (1.0 + float(np.max(np.abs(x)))) and (
            k == 0 or float(np.max(np.abs(r2))) <= 1e-12 * scale
        ):
            return x, mu, it
    return None


def _certify(sys: ConstraintSystem, obj: Objective, x, S, mu):
    """KKT check for a candidate; returns ``(ok, gap, worst_violator, most_negative)``."""
    g = sys.values(x)
    scale = 1.0 + float(np.max(np.abs(sys.h)))
    tol_g = 1e-13 * scale
    viol = g + sys.eps
    inactive = np.ones(sys.M, dtype=bool)
    if S:
        inactive[list(S)] = False
    worst = None
    if np.any(inactive):
        cand = np.where(inactive, viol, -np.inf)
        j = int(np.argmax(cand))
        if cand[j] > tol_g:
            worst = j
    neg = None
    if len(S):
        j = int(np.argmin(mu))
        if mu[j] < -1e-10 * (1.0 + float(np.max(np.abs(mu)))):
            neg = S[j]
    ok = worst is None and neg is None
    gap = math.inf
    if ok:
        _, G, _ = sys.derivatives(x)
        r = obj.grad(x)
        if S:
            r = r + G[list(S)].T @ mu
        comp = float(np.sum(np.abs(mu) * np.abs(viol[list(S)]))) if S else 0.0
        gap = float(np.linalg.norm(r)) * sys.diameter + comp
    return ok, gap, worst, neg


def _active_set(sys, obj, x0, S0, eps_opt, max_changes=None):
    """Primal active-set loop around :func:`_kkt_newton`."""
    S = sorted(set(S0))
    x = x0
    total = 0
    max_changes = max_changes or 3 * sys.M + 5
    seen = set()
    for _ in range(max_changes):
        key = tuple(S)
        if key in seen:
            return None
        seen.add(key)
        out = _kkt_newton(sys, obj, S, x)
        if out is None:
            return None
        x_new, mu, it = out
        total += it
        ok, gap, worst, neg = _certify(sys, obj, x_new, S, mu)
        if ok and gap <= eps_opt:
            return x_new, tuple(S), gap, total
        if neg is not None:
            S = [j for j in S if j != neg]
            x = x_new
        elif worst is not None:
            S = sorted(S + [worst])
            x = x_new
        else:
            return None
    return None


# --------------------------------------------------------------------------
# log-barrier interior point


def _barrier_newton(
    sys: ConstraintSystem,
    obj: Objective,
    x0: np.ndarray,
    eps_opt: float,
    t0: float = 1.0,
    max_outer: int = MAX_OUTER,
    max_inner: int = MAX_INNER,
):
    """Minimise ``obj`` over ``g(x) + eps < 0``; ``x0`` must be strictly feasible."""
    x = x0.copy()
    M = sys.M
    t = t0
    iters = 0

    def phi(y, tt):
        u = -(sys.values(y) + sys.eps)
        if np.any(u <= 0):
            return math.inf
        return tt * obj.value(y) - float(np.sum(np.log(u)))

    for outer in range(max_outer):
        for _ in range(max_inner):
            g, G, Hn = sys.derivatives(x)
            u = -(g + sys.eps)
            inv = 1.0 / u
            grad = t * obj.grad(x) + G.T @ inv
            H = t * obj.hess(x) + (G.T * inv**2) @ G
            if Hn is not None:
                H = H + float(sys.beta @ inv) * Hn
            try:
                dx = -np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                dx = -np.linalg.lstsq(H, grad, rcond=None)[0]
            dec = float(-grad @ dx)
            iters += 1
            if dec / 2.0 <= 1e-10:
                break
            step = 1.0
            f0 = phi(x, t)
            # below this the Armijo test only measures rounding in phi
            noise = 1e-13 * (1.0 + abs(f0))
            while step > 1e-10:
                cand = x + step * dx
                fc = phi(cand, t)
                if fc <= f0 - 0.25 * step * dec or (fc <= f0 + noise and step * dec <= noise):
                    break
                step *= 0.5
            else:
                break
            x = cand
        if M / t <= eps_opt:
            return x, M / t, iters, outer + 1
        # barrier weight 1/t is halved
        t *= 2.0
    raise ConvergenceError(
        "barrier method did not reach the requested duality gap",
        {"gap": M / t, "iterations": iters, "x": x.tolist()},
    )


class _PhaseOne:
    """Objective ``s`` over ``(x, s)``; used to find a strictly feasible start."""

    def __init__(self, d: int) -> None:
        self.e = np.zeros(d + 1)
        self.e[-1] = 1.0
        self.zero = np.zeros((d + 1, d + 1))

    def value(self, y):
        return float(y[-1])

    def grad(self, y):
        return self.e

    def hess(self, y):
        return self.zero


def _phase_one(sys: ConstraintSystem) -> np.ndarray:
    d = sys.d
    W = None
    if sys.conic:
        W = np.zeros((d + 1, d + 1))
        W[:d, :d] = sys.W
    aug = ConstraintSystem(
        np.hstack([sys.C, -np.ones((sys.M, 1))]),
        sys.h,
        sys.beta,
        W,
        None,
        sys.eps,
        sys.n_unknown,
        sys.diameter,
    )
    # keep s bounded below so the auxiliary problem has a minimiser
    floor_row = np.zeros((1, d + 1))
    floor_row[0, -1] = -1.0
    big = 10.0 * (1.0 + float(np.max(np.abs(sys.h))) + sys.diameter)
    aug = ConstraintSystem(
        np.vstack([aug.C, floor_row]),
        np.concatenate([aug.h, [big]]),
        np.concatenate([aug.beta, [0.0]]),
        W,
        None,
        sys.eps,
        sys.n_unknown,
        sys.diameter,
    )
    x = np.zeros(d)
    s0 = float(np.max(sys.values(x) + sys.eps)) + 1.0
    y0 = np.concatenate([x, [s0]])
    y, _, _, _ = _barrier_newton(aug, _PhaseOne(d), y0, eps_opt=1e-6)
    x = y[:d]
    worst = float(np.max(sys.values(x) + sys.eps))
    if worst >= 0.0:
        raise InfeasibleError("target set has no strictly feasible point", worst - sys.eps)
    return x


def _strict_start(sys: ConstraintSystem, hints: Sequence[np.ndarray]) -> np.ndarray:
    scale = 1.0 + float(np.max(np.abs(sys.h)))
    best, best_u = None, -math.inf
    for hint in hints:
        if hint is None:
            continue
        hint = np.asarray(hint, dtype=float)
        u = -float(np.max(sys.values(hint) + sys.eps))
        if u > best_u:
            best, best_u = hint, u
    if best is not None and best_u > 1e-6 * scale:
        return best.copy()
    return _phase_one(sys)


def _same_row(sys: ConstraintSystem, i: int, j: int) -> bool:
    return bool(
        sys.h[i] == sys.h[j] and sys.beta[i] == sys.beta[j] and np.array_equal(sys.C[i], sys.C[j])
    )


def minimize(
    sys: ConstraintSystem,
    obj: Objective,
    eps_opt: float = DEFAULT_EPS_OPT,
    hints: Sequence[np.ndarray] = (),
) -> ProjectionResult:
    """Minimise a smooth convex objective over the shifted set (barrier + polish)."""
    x0 = _strict_start(sys, hints)
    x, gap, iters, _ = _barrier_newton(sys, obj, x0, eps_opt)
    u = -(sys.values(x) + sys.eps)
    scale = 1.0 + float(np.max(np.abs(sys.h)))
    # constraints whose barrier slack is small are the likely active set
    S: list[int] = []
    for j in np.argsort(u):
        if u[j] >= 1e-4 * scale or len(S) == sys.d:
            break
        # a repeated row (polytope face equal to a box face) would make KKT singular
        if not any(_same_row(sys, int(j), k) for k in S):
            S.append(int(j))
    polished = _active_set(sys, obj, x, S, eps_opt)
    if polished is not None:
        xp, S_act, gap_p, it = polished
        return ProjectionResult(
            xp, gap_p, float(np.max(sys.exact_values(xp))), iters + it, S_act, "barrier+kkt"
        )
    return ProjectionResult(
        x, gap, float(np.max(sys.exact_values(x))), iters, tuple(S), "barrier"
    )


def _kernel_project(sys: ConstraintSystem, z, x0, S0, eps_opt):
    x, mask, gap, iters, status = _kernels.project_active_set(
        sys.C, sys.h, sys.beta, sys._Wk, sys.conic, sys.eps, z,
        np.asarray(x0, dtype=float), np.asarray(S0, dtype=np.int64),
        sys.diameter, eps_opt, 3 * sys.M + 5,
    )
    if status != 0:
        return None
    slack = float(np.max(sys.fast_values(x, False)))
    active = tuple(int(j) for j in np.flatnonzero(mask))
    return ProjectionResult(x, float(gap), slack, int(iters), active, "kkt")


def _project(
    sys: ConstraintSystem,
    z: np.ndarray,
    eps_opt: float,
    warm_active: Sequence[int] | None = None,
    warm_point: np.ndarray | None = None,
    hints: Sequence[np.ndarray] = (),
) -> ProjectionResult:
    z = np.asarray(z, dtype=float)
    if z.shape != (sys.d,):
        raise InvalidInputError(f"expected a point of dimension {sys.d}, got shape {z.shape}")
    if not eps_opt > 0:
        raise InvalidInputError("eps_opt must be positive")
    g_exact = sys.fast_values(z, False)
    if np.all(g_exact <= -sys.eps):
        return ProjectionResult(z.copy(), 0.0, float(np.max(g_exact)), 0)
    if warm_active is not None and warm_point is not None:
        res = _kernel_project(sys, z, warm_point, list(warm_active), eps_opt)
        if res is not None:
            return res
    viol = sys.fast_values(z) + sys.eps
    bad = np.flatnonzero(viol > 0)
    if len(bad) <= sys.d:
        res = _kernel_project(sys, z, z, bad, eps_opt)
        if res is not None:
            return res
    res = _kernel_project(sys, z, z, [int(np.argmax(viol))], eps_opt)
    if res is not None:
        return res
    hint_list = list(hints)
    if warm_point is not None:
        hint_list.append(warm_point)
    lower, upper = -sys.h[sys.M - sys.d :], sys.h[sys.M - 2 * sys.d : sys.M - sys.d]
    hint_list.append(0.5 * (lower + upper))
    return minimize(sys, _Distance(z), eps_opt, hint_list)


class Projector:
    """Stateful projector onto one fixed set; remembers the last active set."""

    def __init__(
        self,
        system: ConstraintSystem,
        eps_opt: float = DEFAULT_EPS_OPT,
        interior_hint=None,
    ) -> None:
        self.system = system
        self.eps_opt = eps_opt
        self.interior_hint = None if interior_hint is None else np.asarray(interior_hint, float)
        self._active: tuple[int, ...] | None = None
        self._point: np.ndarray | None = None
        self.calls = 0
        self.fallbacks = 0

    def __call__(self, z) -> ProjectionResult:
        self.calls += 1
        res = _project(
            self.system,
            z,
            self.eps_opt,
            self._active,
            self._point,
            () if self.interior_hint is None else (self.interior_hint,),
        )
        if res.method.startswith("barrier"):
            self.fallbacks += 1
        if res.method != "identity":
            self._active, self._point = res.active, res.point
        return res


def project_conservative(
    s: ConservativeSafeSet,
    z,
    eps_opt: float = DEFAULT_EPS_OPT,
    interior_hint=None,
) -> ProjectionResult:
    """Project ``z`` onto the ``eps_feas``-shrunk conservative set (box included)."""
    sys = system_for_conservative(s)
    hints = () if interior_hint is None else (np.asarray(interior_hint, float),)
    return _project(sys, z, eps_opt, hints=hints)


def project_polytope(
    p: TruePolytope, amb: AmbientSet, z, eps_opt: float = DEFAULT_EPS_OPT
) -> ProjectionResult:
    """Project ``z`` onto the ``eps_feas``-shrunk polytope ``{Ax <= b} ∩ X``."""
    if amb.d != p.d:
        raise InvalidInputError("polytope and ambient box differ in dimension")
    return _project(system_for_polytope(p, amb), z, eps_opt)


# --------------------------------------------------------------------------
# hindsight optimum


class PrefixObjective(Protocol):
    """Sum of the first ``t`` costs; ``linear_coef`` is set for linear sums."""

    count: int
    linear_coef: np.ndarray | None

    def value(self, x: np.ndarray) -> float: ...
    def grad(self, x: np.ndarray) -> np.ndarray: ...
    def hess(self, x: np.ndarray) -> np.ndarray | None: ...
    def smoothness(self) -> float: ...


class _Scaled:
    def __init__(self, obj, k: float) -> None:
        self.obj, self.k = obj, k

    def value(self, x):
        return self.k * self.obj.value(x)

    def grad(self, x):
        return self.k * self.obj.grad(x)

    def hess(self, x):
        return self.k * self.obj.hess(x)


def _lex_argmin(points: np.ndarray, values: np.ndarray) -> np.ndarray:
    best = float(np.min(values))
    tol = 1e-12 * max(1.0, abs(best))
    ties = points[values <= best + tol]
    order = np.lexsort(ties.T[::-1])
    return ties[order[0]]


def hindsight_optimum(
    prefix: PrefixObjective,
    p: TruePolytope,
    amb: AmbientSet,
    eps_opt: float = DEFAULT_EPS_OPT,
    method: str = "auto",
    max_iter: int = 100_000,
) -> np.ndarray:
    """Minimise a prefix-summed cost over the true safe set.

    Linear sums in ``d <= 3`` use vertex enumeration (lexicographic tie-break).
    Otherwise an interior-point Newton method is used when a Hessian is
    available, and projected gradient descent with step ``1 / smoothness``
    when it is not (or when ``method="pgd"``).
    """
    if method not in ("auto", "newton", "pgd"):
        raise InvalidInputError(f"unknown method {method!r}")
    return HindsightSolver(p, amb, eps_opt, method, max_iter)(prefix)


class HindsightSolver:
    """Repeated hindsight optima over one polytope.

    Each solve first tries the active-set method from the previous answer,
    which is usually right when prefixes grow by a few percent between calls.
    """

    def __init__(
        self,
        p: TruePolytope,
        amb: AmbientSet,
        eps_opt: float = DEFAULT_EPS_OPT,
        method: str = "auto",
        max_iter: int = 100_000,
    ) -> None:
        if amb.d != p.d:
            raise InvalidInputError("polytope and ambient box differ in dimension")
        self.p, self.amb = p, amb
        self.eps_opt, self.method, self.max_iter = eps_opt, method, max_iter
        self.sys = system_for_polytope(p, amb, eps=0.0)
        self._vertices = None
        self._warm: tuple[np.ndarray, list[int]] | None = None

    def __call__(self, prefix: PrefixObjective) -> np.ndarray:
        if prefix.count < 1:
            raise InvalidInputError("prefix must contain at least one cost")
        d = self.p.d
        if self.method == "auto" and prefix.linear_coef is not None and d <= 3:
            if self._vertices is None:
                self._vertices = vertices(self.p, self.amb)
            V = self._vertices
            if len(V) == 0:
                raise InfeasibleError("safe set has no vertices", math.nan)
            return _lex_argmin(V, V @ prefix.linear_coef)
        if self.method == "pgd" or prefix.hess(np.zeros(d)) is None:
            return _pgd(prefix, self.p, self.amb, self.eps_opt, self.max_iter)
        # mean cost keeps the barrier well scaled as the prefix grows
        obj = _Scaled(prefix, 1.0 / prefix.count)
        if self._warm is not None:
            # a diverging Newton step is caught by the certificate; keep it quiet
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                out = _active_set(self.sys, obj, self._warm[0], self._warm[1], self.eps_opt)
            if out is not None:
                self._warm = (out[0], list(out[1]))
                return out[0]
        center = 0.5 * (self.amb.box_lower + self.amb.box_upper)
        res = minimize(self.sys, obj, self.eps_opt, hints=(center,))
        self._warm = (res.point, list(res.active))
        return res.point


def _pgd(prefix, p, amb, eps_opt, max_iter) -> np.ndarray:
    sys = system_for_polytope(p, amb, eps=0.0)
    step = 1.0 / prefix.smoothness()
    proj = Projector(sys)
    x = proj(0.5 * (amb.box_lower + amb.box_upper)).point
    for _ in range(max_iter):
        x_new = proj(x - step * prefix.grad(x)).point
        if np.linalg.norm(x - x_new) / step <= eps_opt:
            return x_new
        x = x_new
    raise ConvergenceError("projected gradient descent did not converge", {"x": x.tolist()})
