"""Polytopes, the ambient box, and membership tests.

The true constraint matrix ``A`` lives only in :class:`TruePolytope`; the
algorithm side sees ``b`` and the norm bound ``L_A`` and nothing else.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def _as_point(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise InvalidInputError(f"expected a point of dimension {d}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class AmbientSet:
    """Known action box ``X`` with the derived norm bound ``L``."""

    box_lower: np.ndarray
    box_upper: np.ndarray
    norm_bound: float = field(init=False)

    def __post_init__(self) -> None:
        lo = _frozen(self.box_lower, 1, "box_lower")
        hi = _frozen(self.box_upper, 1, "box_upper")
        if lo.shape != hi.shape:
            raise InvalidInputError("box_lower and box_upper differ in length")
        if np.any(lo > hi):
            raise InvalidInputError("box is empty (lower > upper)")
        object.__setattr__(self, "box_lower", lo)
        object.__setattr__(self, "box_upper", hi)
        # the farthest corner picks max(|lo|, |hi|) per coordinate
        corner = np.maximum(np.abs(lo), np.abs(hi))
        object.__setattr__(self, "norm_bound", float(np.linalg.norm(corner)))

    @property
    def d(self) -> int:
        return self.box_lower.shape[0]

    @property
    def L(self) -> float:
        return self.norm_bound

    def contains(self, x) -> bool:
        x = _as_point(x, self.d)
        return bool(np.all(x >= self.box_lower) and np.all(x <= self.box_upper))

    def corners(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.box_lower, self.box_upper))))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.box_lower, self.box_upper, size=(n, self.d))

    @classmethod
    def cube(cls, half_width: float, d: int) -> "AmbientSet":
        return cls(np.full(d, -half_width), np.full(d, half_width))


@dataclass(frozen=True)
class TruePolytope:
    """Unknown safe-set constraints ``A x <= b`` (rows are constraint normals)."""

    A: np.ndarray
    b: np.ndarray
    L_A: float = field(init=False)

    def __post_init__(self) -> None:
        A = _frozen(self.A, 2, "A")
        b = _frozen(self.b, 1, "b")
        if A.shape[0] != b.shape[0]:
            raise InvalidInputError(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
        if A.shape[0] == 0 or A.shape[1] == 0:
            raise InvalidInputError("A must be non-empty")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "L_A", float(np.max(np.linalg.norm(A, axis=1))))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @classmethod
    def box(cls, x_max: float, d: int = 2) -> "TruePolytope":
        """``-x_max <= x_i <= x_max`` written as rows ``+e_i``, ``-e_i``."""
        rows = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            rows.extend([e, -e])
        return cls(np.array(rows), np.full(2 * d, float(x_max)))


@dataclass(frozen=True)
class ShrunkPolytope:
    """``{x : a_i^T x + tau_in <= b_i}``; needs the true ``A`` (verification only)."""

    base: TruePolytope
    tau_in: float

    def __post_init__(self) -> None:
        if not self.tau_in > 0:
            raise InvalidInputError(f"tau_in must be positive, got {self.tau_in}")


def safety_margin(p: TruePolytope, x) -> np.ndarray:
    """Return ``b - A x``; a negative entry flags a violated constraint."""
    x = _as_point(x, p.d)
    return p.b - p.A @ x


def contains(p: TruePolytope, amb: AmbientSet, x) -> bool:
    """Exact membership in ``{x in X : A x <= b}`` (no tolerance)."""
    x = _as_point(x, p.d)
    if amb.d != p.d:
        raise InvalidInputError("polytope and ambient box differ in dimension")
    return bool(np.all(p.A @ x <= p.b)) and amb.contains(x)


def shrunk_contains(s: ShrunkPolytope, x) -> bool:
    x = _as_point(x, s.base.d)
    return bool(np.all(s.base.A @ x + s.tau_in <= s.base.b))


def contains_many(p: TruePolytope, amb: AmbientSet | None, X: np.ndarray) -> np.ndarray:
    """Vectorised :func:`contains` over the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != p.d:
        raise InvalidInputError(f"expected an (n, {p.d}) array, got {X.shape}")
    ok = np.all(X @ p.A.T <= p.b, axis=1)
    if amb is not None:
        ok &= np.all((X >= amb.box_lower) & (X <= amb.box_upper), axis=1)
    return ok


def shrunk_contains_many(s: ShrunkPolytope, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.all(X @ s.base.A.T + s.tau_in <= s.base.b, axis=1)


def halfspaces(p: TruePolytope, amb: AmbientSet | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stack the polytope rows with the box rows into one ``G x <= h`` system."""
    G, h = [p.A], [p.b]
    if amb is not None:
        eye = np.eye(p.d)
        G += [eye, -eye]
        h += [amb.box_upper, -amb.box_lower]
    return np.vstack(G), np.concatenate(h)


def vertices(p: TruePolytope, amb: AmbientSet | None = None, tol: float = 1e-9) -> np.ndarray:
    """Enumerate vertices of ``{A x <= b} ∩ X`` by brute force over row subsets.

    Intended for desk-scale problems; the cost is ``C(rows, d)`` small solves.
    Rows are returned sorted lexicographically.
    """
    G, h = halfspaces(p, amb)
    d = p.d
    scale = max(1.0, float(np.max(np.abs(h))))
    found: list[np.ndarray] = []
    for idx in itertools.combinations(range(G.shape[0]), d):
        sub = G[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, h[list(idx)])
        if np.all(G @ v <= h + tol * scale):
            if not any(np.allclose(v, w, atol=tol * scale) for w in found):
                found.append(v)
    if not found:
        return np.empty((0, d))
    out = np.array(found)
    order = np.lexsort(out.T[::-1])
    return out[order]
