from __future__ import annotations

import math

import numpy as np
import pytest

from safe_oco.errors import InvalidInputError
from safe_oco.estimation import (
    ExplorationLog,
    build_conservative_set,
    confidence_radius,
    conservative_constraint_values,
    coverage_holds,
    exact_estimate,
    fit_rls,
    naive_polytope,
)
from safe_oco.geometry import AmbientSet, TruePolytope, contains_many

# independently evaluated with 50-digit arithmetic
PINNED_BETA = 0.9124743138118787


def test_noiseless_fit_recovers_matrix(box):
    p, _ = box
    X = np.random.default_rng(1).normal(size=(50, 2))
    est = fit_rls(ExplorationLog(X, X @ p.A.T), lam=1e-12)
    np.testing.assert_allclose(est.A_hat, p.A, atol=1e-6)


def test_single_action_ridge_by_hand():
    X = np.array([[1.0, 0.0]])
    Y = np.array([[2.0]])
    est = fit_rls(ExplorationLog(X, Y), lam=1.0)
    np.testing.assert_allclose(est.A_hat, [[1.0, 0.0]])
    np.testing.assert_allclose(est.V, [[2.0, 0.0], [0.0, 1.0]])


def test_radius_trivial_cases():
    kw = dict(d=2, T0=10, L=1.0, delta=0.1, m=1)
    assert confidence_radius(R=0, lam=1.0, L_A=0.0, **kw) == 0.0
    assert confidence_radius(R=0, lam=0.5, L_A=math.sqrt(2), **kw) == pytest.approx(1.0, rel=1e-15)


def test_radius_pinned():
    beta = confidence_radius(R=math.sqrt(1e-3), d=2, T0=10_000, L=3 * math.sqrt(2), lam=0.5,
                             delta=1e-3, m=4, L_A=1.0)
    assert beta == pytest.approx(PINNED_BETA, rel=1e-12)


def test_radius_pinned_against_mpmath():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 50
    R, L = mp.sqrt(mp.mpf("1e-3")), 3 * mp.sqrt(2)
    ref = R * mp.sqrt(2 * mp.log((1 + 10_000 * L**2 / mp.mpf("0.5")) / (mp.mpf("1e-3") / 4))) + mp.sqrt(mp.mpf("0.5"))
    assert float(ref) == pytest.approx(PINNED_BETA, rel=1e-15)


@pytest.mark.parametrize("bad", [dict(delta=0.0), dict(delta=1.0), dict(lam=0.0), dict(R=-1.0), dict(T0=0)])
def test_radius_rejects(bad):
    kw = dict(R=0.1, d=2, T0=10, L=1.0, lam=1.0, delta=0.1, m=1, L_A=1.0) | bad
    with pytest.raises(InvalidInputError):
        confidence_radius(**kw)


def test_constraint_value_by_hand():
    p = TruePolytope(np.array([[1.0, 0.0]]), np.array([2.0]))
    est = exact_estimate(p, lam=1.0)
    cs = build_conservative_set(est, 1.0, p.b, AmbientSet.cube(5.0, 2))
    assert conservative_constraint_values(cs, np.array([1.0, 0.0]))[0] == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_array_equal(conservative_constraint_values(cs, np.zeros(2)), [-2.0])


def test_zero_beta_is_estimated_polytope(box):
    p, amb = box
    X = np.random.default_rng(2).normal(size=(30, 2))
    Y = X @ p.A.T + 0.1 * np.random.default_rng(3).normal(size=(30, 4))
    est = fit_rls(ExplorationLog(X, Y), lam=0.5)
    cs = build_conservative_set(est, 0.0, p.b, amb)
    pts = np.random.default_rng(4).uniform(-3, 3, (2000, 2))
    naive = contains_many(naive_polytope(est, p.b), amb, pts)
    assert np.array_equal(cs.contains_many(pts), naive)


def test_large_v_approaches_estimated_polytope(box):
    p, amb = box
    est = exact_estimate(p, lam=1e12)
    cs = build_conservative_set(est, 1.0, p.b, amb)
    pts = np.random.default_rng(5).uniform(-2.99, 2.99, (1000, 2))
    assert cs.contains_many(pts).all()


def test_conservative_set_shrinks_with_beta(box):
    p, amb = box
    est = exact_estimate(p, lam=1.0)
    pts = np.random.default_rng(6).uniform(-3, 3, (3000, 2))
    a = build_conservative_set(est, 0.5, p.b, amb).contains_many(pts)
    b = build_conservative_set(est, 1.0, p.b, amb).contains_many(pts)
    assert not np.any(b & ~a)


def test_grid_membership_matches_sign_of_g(box):
    p, amb = box
    rng = np.random.default_rng(7)
    X = rng.uniform(-3, 3, (40, 2))
    est = fit_rls(ExplorationLog(X, X @ p.A.T + 0.03 * rng.normal(size=(40, 4))), lam=0.5)
    cs = build_conservative_set(est, 0.8, p.b, amb)
    grid = np.stack(np.meshgrid(np.linspace(-3, 3, 120), np.linspace(-3, 3, 120)), -1).reshape(-1, 2)
    vec = cs.contains_many(grid)
    scalar = np.array([np.all(conservative_constraint_values(cs, x) <= 0) for x in grid])
    assert np.array_equal(vec, scalar)


def test_coverage_exact_estimate(box):
    p, _ = box
    assert coverage_holds(exact_estimate(p), p.A, 0.0)


def test_negative_beta_rejected(box):
    p, amb = box
    with pytest.raises(InvalidInputError):
        build_conservative_set(exact_estimate(p), -0.1, p.b, amb)


def test_fit_rejects_shape_mismatch():
    with pytest.raises(InvalidInputError):
        fit_rls(ExplorationLog(np.zeros((3, 2)), np.zeros((4, 1))), lam=1.0)
