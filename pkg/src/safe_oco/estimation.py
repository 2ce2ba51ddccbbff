"""Ridge estimate of the constraint matrix and the conservative safe set."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DataError, InvalidInputError
from .geometry import AmbientSet, TruePolytope

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExplorationLog:
    """Exploration actions (``T0 x d``) and their noisy observations (``T0 x m``)."""

    actions: np.ndarray
    observations: np.ndarray

    def __post_init__(self) -> None:
        X = np.atleast_2d(np.asarray(self.actions, dtype=float))
        Y = np.atleast_2d(np.asarray(self.observations, dtype=float))
        if X.size == 0 or Y.size == 0:
            raise InvalidInputError("exploration log is empty")
        if X.shape[0] != Y.shape[0]:
            raise InvalidInputError(
                f"{X.shape[0]} actions but {Y.shape[0]} observations"
            )
        object.__setattr__(self, "actions", X)
        object.__setattr__(self, "observations", Y)

    @property
    def T0(self) -> int:
        return self.actions.shape[0]


@dataclass(frozen=True)
class RlsEstimate:
    A_hat: np.ndarray
    V: np.ndarray
    lam: float
    V_chol: np.ndarray  # lower triangular, V = V_chol @ V_chol.T

    @property
    def m(self) -> int:
        return self.A_hat.shape[0]

    @property
    def d(self) -> int:
        return self.A_hat.shape[1]

    def v_norm(self, v) -> np.ndarray:
        """``||v||_V`` for a vector or for each row of a matrix."""
        v = np.asarray(v, dtype=float)
        return np.linalg.norm(v @ self.V_chol, axis=-1)

    def v_inv_norm(self, x) -> np.ndarray:
        """``||x||_{V^{-1}}`` via one triangular solve; works row-wise on matrices."""
        x = np.asarray(x, dtype=float)
        sol = linalg.solve_triangular(self.V_chol, x.T, lower=True, check_finite=False)
        return np.linalg.norm(sol, axis=0)

    def lambda_min(self) -> float:
        return float(np.linalg.eigvalsh(self.V)[0])


def _cholesky(V: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        d = V.shape[0]
        jitter = 1e-12 * np.trace(V) / d
        log.warning("Cholesky of Gram matrix failed; retrying with jitter %.3e", jitter)
        return np.linalg.cholesky(V + jitter * np.eye(d))


def fit_rls(log_: ExplorationLog, lam: float) -> RlsEstimate:
    """Regularised least squares for all ``m`` constraint rows at once.

    ``V = lam I + X^T X`` is shared by the rows, so one factorisation serves
    ``m`` right-hand sides.
    """
    if not lam > 0:
        raise InvalidInputError(f"ridge weight must be positive, got {lam}")
    X, Y = log_.actions, log_.observations
    if not np.all(np.isfinite(Y)):
        raise DataError("observations contain non-finite values")
    if not np.all(np.isfinite(X)):
        raise DataError("actions contain non-finite values")
    d = X.shape[1]
    V = lam * np.eye(d) + X.T @ X
    V = 0.5 * (V + V.T)
    chol = _cholesky(V)
    rhs = X.T @ Y  # d x m
    A_hat_T = linalg.cho_solve((chol, True), rhs, check_finite=False)
    A_hat = np.ascontiguousarray(A_hat_T.T)
    for arr in (A_hat, V, chol):
        arr.setflags(write=False)
    return RlsEstimate(A_hat=A_hat, V=V, lam=float(lam), V_chol=chol)


def confidence_radius(
    *,
    R: float,
    d: int,
    T0: int,
    L: float,
    lam: float,
    delta: float,
    m: int,
    L_A: float,
) -> float:
    """Ellipsoid radius with per-row confidence ``1 - delta/m``."""
    if not 0.0 < delta < 1.0:
        raise InvalidInputError(f"delta must lie in (0, 1), got {delta}")
    if R < 0 or L_A < 0:
        raise InvalidInputError("R and L_A must be non-negative")
    if lam <= 0 or L <= 0 or d < 1 or m < 1 or T0 < 1:
        raise InvalidInputError("lam, L must be positive and d, m, T0 at least 1")
    noise = R * math.sqrt(d * math.log((1.0 + T0 * L * L / lam) / (delta / m)))
    return noise + math.sqrt(lam) * L_A


@dataclass(frozen=True)
class ConfidenceSpec:
    beta: float
    delta: float
    R: float
    L: float
    L_A: float
    lam: float
    T0: int
    m: int
    d: int

    @classmethod
    def build(cls, **params) -> "ConfidenceSpec":
        return cls(beta=confidence_radius(**params), **params)

    def recompute(self) -> float:
        return confidence_radius(
            R=self.R, d=self.d, T0=self.T0, L=self.L, lam=self.lam,
            delta=self.delta, m=self.m, L_A=self.L_A,
        )


@dataclass(frozen=True)
class ConservativeSafeSet:
    """``{x in X : a_hat_i^T x + beta ||x||_{V^{-1}} <= b_i for all i}``."""

    estimate: RlsEstimate
    beta: float
    b: np.ndarray
    ambient: AmbientSet

    @property
    def m(self) -> int:
        return self.estimate.m

    @property
    def d(self) -> int:
        return self.estimate.d

    def constraint_values(self, x) -> np.ndarray:
        return conservative_constraint_values(self, x)

    def contains(self, x) -> bool:
        g = conservative_constraint_values(self, x)
        return bool(np.all(g <= 0.0)) and self.ambient.contains(x)

    def contains_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        g = X @ self.estimate.A_hat.T - self.b
        if self.beta != 0.0:
            g = g + self.beta * self.estimate.v_inv_norm(X)[:, None]
        inside = np.all(X >= self.ambient.box_lower, axis=1) & np.all(
            X <= self.ambient.box_upper, axis=1
        )
        return np.all(g <= 0.0, axis=1) & inside


def build_conservative_set(
    est: RlsEstimate, beta: float, b, ambient: AmbientSet
) -> ConservativeSafeSet:
    if beta < 0:
        raise InvalidInputError(f"beta must be non-negative, got {beta}")
    b = np.array(b, dtype=float)
    if b.shape != (est.m,):
        raise InvalidInputError(f"b must have length {est.m}, got shape {b.shape}")
    if ambient.d != est.d:
        raise InvalidInputError("ambient box dimension does not match the estimate")
    b.setflags(write=False)
    return ConservativeSafeSet(estimate=est, beta=float(beta), b=b, ambient=ambient)


def conservative_constraint_values(s: ConservativeSafeSet, x) -> np.ndarray:
    """``g_i(x) = a_hat_i^T x + beta ||x||_{V^{-1}} - b_i``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (s.d,):
        raise InvalidInputError(f"expected a point of dimension {s.d}, got shape {x.shape}")
    return s.estimate.A_hat @ x + s.beta * float(s.estimate.v_inv_norm(x)) - s.b


def exact_estimate(p: TruePolytope, lam: float = 1.0) -> RlsEstimate:
    """An estimate equal to the truth, used for the known-set ablation (beta = 0)."""
    d = p.d
    V = lam * np.eye(d)
    chol = np.sqrt(lam) * np.eye(d)
    A_hat = np.array(p.A)
    for arr in (A_hat, V, chol):
        arr.setflags(write=False)
    return RlsEstimate(A_hat=A_hat, V=V, lam=float(lam), V_chol=chol)


def naive_polytope(est: RlsEstimate, b) -> TruePolytope:
    """The plug-in polytope ``{x : A_hat x <= b}`` with no confidence margin."""
    return TruePolytope(np.array(est.A_hat), np.array(b, dtype=float))


def coverage_holds(est: RlsEstimate, A_true: np.ndarray, beta: float) -> bool:
    """Whether every true row lies in its confidence ellipsoid."""
    return bool(np.all(est.v_norm(np.asarray(A_true) - est.A_hat) <= beta))
