"""Safe exploration around a known baseline action.

Perturbations are uniform on the sphere of radius ``min(1, L)`` (a Gaussian
draw, normalised), so their covariance is ``min(1, L)^2 / d * I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .geometry import AmbientSet, TruePolytope

GAMMA_CEILING = 1.0 - 1e-9


@dataclass(frozen=True)
class BaselineSpec:
    """Safe baseline ``x_s`` with its known image ``b_s = A x_s``."""

    x_s: np.ndarray
    b_s: np.ndarray
    b: np.ndarray
    delta_s: float = field(init=False)

    def __post_init__(self) -> None:
        x_s = np.array(self.x_s, dtype=float)
        b_s = np.array(self.b_s, dtype=float)
        b = np.array(self.b, dtype=float)
        if b_s.shape != b.shape:
            raise InvalidInputError("b_s and b differ in length")
        gap = float(np.min(b - b_s))
        if not gap > 0:
            raise InvalidInputError(f"baseline is not strictly safe (gap {gap:.3e})")
        for arr in (x_s, b_s, b):
            arr.setflags(write=False)
        object.__setattr__(self, "x_s", x_s)
        object.__setattr__(self, "b_s", b_s)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "delta_s", gap)

    @classmethod
    def from_polytope(cls, p: TruePolytope, x_s) -> "BaselineSpec":
        """Environment-side constructor: evaluates ``A x_s`` with the true ``A``."""
        x_s = np.asarray(x_s, dtype=float)
        if x_s.shape != (p.d,):
            raise InvalidInputError(f"baseline must have dimension {p.d}")
        return cls(x_s, p.A @ x_s, p.b)

    def check(self, p: TruePolytope, tol: float = 1e-10) -> bool:
        return bool(np.allclose(p.A @ self.x_s, self.b_s, rtol=0.0, atol=tol))


@dataclass(frozen=True)
class ExplorationConfig:
    gamma: float
    sigma_zeta_sq: float
    zeta_scale: float
    T0: int
    rng_seed: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidInputError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.T0 < 1:
            raise InvalidInputError("T0 must be at least 1")


def compute_gamma(delta_s: float, L_A: float) -> float:
    """``min(delta_s / L_A, 1 - 1e-9)``."""
    if not (delta_s > 0 and L_A > 0):
        raise InvalidInputError("delta_s and L_A must be positive")
    return min(delta_s / L_A, GAMMA_CEILING)


def row_gamma_cap(b, b_s, L_A: float, zeta_scale: float) -> float:
    """Largest ``gamma`` with ``(1-gamma) b_s_i + gamma L_A |zeta| <= b_i`` for every row.

    Never binds below ``delta_s / L_A`` when ``b_s >= 0``; it does bind when
    some ``b_s_i`` is negative, where the plain rule can overshoot.
    """
    b = np.asarray(b, dtype=float)
    b_s = np.asarray(b_s, dtype=float)
    denom = L_A * zeta_scale - b_s
    room = b - b_s
    mask = denom > 0
    if not np.any(mask):
        return GAMMA_CEILING
    return min(float(np.min(room[mask] / denom[mask])), GAMMA_CEILING)


def ambient_gamma_cap(x_s, ambient: AmbientSet, zeta_scale: float) -> float:
    """Largest ``gamma`` keeping every perturbed action inside the known box."""
    x = np.asarray(x_s, dtype=float)
    caps = [GAMMA_CEILING]
    up = zeta_scale - x
    m = up > 0
    if np.any(m):
        caps.append(float(np.min((ambient.box_upper - x)[m] / up[m])))
    down = x + zeta_scale
    m = down > 0
    if np.any(m):
        caps.append(float(np.min((x - ambient.box_lower)[m] / down[m])))
    return max(0.0, min(caps))


def choose_gamma(baseline: BaselineSpec, L_A: float, ambient: AmbientSet) -> float:
    """Mixing weight used by the driver: the plain rule, capped for safety."""
    zs = zeta_scale_for(ambient.L)
    return min(
        compute_gamma(baseline.delta_s, L_A),
        row_gamma_cap(baseline.b, baseline.b_s, L_A, zs),
        ambient_gamma_cap(baseline.x_s, ambient, zs),
    )


def zeta_scale_for(L: float) -> float:
    return min(1.0, L)


def sigma_zeta_sq(d: int, zeta_scale: float) -> float:
    """Per-coordinate variance of a uniform draw on the sphere of radius ``zeta_scale``."""
    return zeta_scale**2 / d


def sample_zeta(rng: np.random.Generator, d: int, zeta_scale: float) -> np.ndarray:
    if d < 1:
        raise InvalidInputError("d must be at least 1")
    while True:
        g = rng.standard_normal(d)
        n = math.sqrt(float(g @ g))
        if n > 0.0:
            return zeta_scale * (g / n)


def sample_zetas(rng: np.random.Generator, n: int, d: int, zeta_scale: float) -> np.ndarray:
    """``n`` draws at once; consumes the stream exactly like ``n`` calls of :func:`sample_zeta`."""
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1)
    for i in np.flatnonzero(norms == 0.0):
        # measure-zero event; redraw in place (breaks stream parity, never observed)
        g[i] = sample_zeta(rng, d, 1.0)
        norms[i] = 1.0
    return zeta_scale * g / norms[:, None]


def exploration_action(x_s, gamma: float, zeta) -> np.ndarray:
    """``(1 - gamma) x_s + gamma zeta``."""
    if not 0.0 <= gamma < 1.0:
        raise InvalidInputError(f"gamma must lie in [0, 1), got {gamma}")
    return (1.0 - gamma) * np.asarray(x_s, dtype=float) + gamma * np.asarray(zeta, dtype=float)


def exploration_actions(x_s, gamma: float, zetas: np.ndarray) -> np.ndarray:
    if not 0.0 <= gamma < 1.0:
        raise InvalidInputError(f"gamma must lie in [0, 1), got {gamma}")
    return (1.0 - gamma) * np.asarray(x_s, dtype=float)[None, :] + gamma * zetas


def generate_exploration(
    x_s, gamma: float, zeta_scale: float, T0: int, rng: np.random.Generator
) -> np.ndarray:
    """All ``T0`` exploration actions as a ``(T0, d)`` array."""
    x_s = np.asarray(x_s, dtype=float)
    return exploration_actions(x_s, gamma, sample_zetas(rng, T0, x_s.shape[0], zeta_scale))
