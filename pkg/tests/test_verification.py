from __future__ import annotations

import math

import numpy as np
import pytest

from safe_oco import rng as rngmod
from safe_oco.errors import InvalidInputError
from safe_oco.estimation import ExplorationLog, build_conservative_set, exact_estimate, fit_rls, naive_polytope
from safe_oco.geometry import ShrunkPolytope, TruePolytope
from safe_oco.projection import project_conservative
from safe_oco.verification import (
    CheckRecord,
    check_eigmin,
    check_nesting,
    check_t0_conditions,
    event_frequencies,
    exploration_trial,
    grid_project_oracle,
    grid_resolution,
    shrink_margin,
)


def test_exact_estimate_nests_cleanly(box):
    p, amb = box
    cs = build_conservative_set(exact_estimate(p), 0.0, p.b, amb)
    rep = check_nesting(p, cs, ShrunkPolytope(p, 0.3), 20_000, np.random.default_rng(0))
    assert rep.clean and rep.in_shrunk < rep.in_conservative == rep.in_true


def test_tilted_estimate_escapes(box):
    p, amb = box
    est = fit_rls(ExplorationLog(np.eye(2), np.array([[1.1, -1, 0, 0], [0, 0, 1, -1]])), lam=1e-9)
    rep = check_nesting(p, naive_polytope(est, p.b), ShrunkPolytope(p, 0.1), 20_000,
                        np.random.default_rng(1), ambient=amb)
    assert rep.violations_conservative_not_true == 0  # 1.1 x <= 3 is stricter than x <= 3
    est = fit_rls(ExplorationLog(np.eye(2), np.array([[0.9, -1, 0, 0], [0, 0, 1, -1]])), lam=1e-9)
    rep = check_nesting(p, naive_polytope(est, p.b), ShrunkPolytope(p, 0.1), 20_000,
                        np.random.default_rng(1), ambient=amb)
    assert rep.violations_conservative_not_true > 0


def test_nesting_needs_ambient_for_plain_polytope(box):
    p, _ = box
    with pytest.raises(InvalidInputError):
        check_nesting(p, p, ShrunkPolytope(p, 0.1), 10, np.random.default_rng(0))


def test_shrink_margin():
    assert shrink_margin(0.5, 3.0, 4.0) == 1.5
    with pytest.raises(InvalidInputError):
        shrink_margin(0.5, 3.0, 0.0)


def test_eigmin_by_hand():
    V = 0.5 * np.eye(2) + 3 * np.outer([1, 0], [1, 0])
    assert sorted(np.linalg.eigvalsh(V)) == [0.5, 3.5]
    lmin, bound, holds = check_eigmin(V, 0.5, 1.0, 0.5, 3)
    assert lmin == 0.5 and bound == 0.5 + 0.5 * 0.5 * 3 and not holds


def test_eigmin_without_data():
    assert check_eigmin(0.5 * np.eye(2), 0.5, 0.7, 0.5, 0)[2]
    assert not check_eigmin(0.5 * np.eye(2), 0.5, 0.7, 0.5, 1)[2]


def test_eigmin_rejects_asymmetric():
    with pytest.raises(InvalidInputError):
        check_eigmin(np.array([[1.0, 0.2], [0.0, 1.0]]), 0.5, 1.0, 0.5, 1)


def test_t0_conditions_scaling():
    kw = dict(L=3 * math.sqrt(2), gamma=1 - 1e-9, sigma_zeta_sq=0.5, d=2, delta=1e-3)
    _, one = check_t0_conditions(beta_T=1.0, delta_s=1.5, **kw)
    _, two = check_t0_conditions(beta_T=2.0, delta_s=1.5, **kw)
    assert abs(two - 4 * one) <= 4
    _, huge = check_t0_conditions(beta_T=1.0, delta_s=1e9, **kw)
    assert huge <= 1
    chern, _ = check_t0_conditions(beta_T=1.0, delta_s=1.5, **kw)
    assert chern == math.ceil(8 * 18 / ((1 - 1e-9) ** 2 * 0.5) * math.log(2 / 1e-3))


def test_oracle_returns_members_unchanged():
    z = np.array([0.5, -0.25])
    assert np.array_equal(grid_project_oracle(lambda X: X[:, 0] <= 1.0, z, ((-3, -3), (3, 3))), z)


def test_oracle_half_space():
    bounds = (np.array([-3.0, -3.0]), np.array([3.0, 3.0]))
    o = grid_project_oracle(lambda X: X[:, 0] <= 1.0, np.array([2.0, 0.0]), bounds)
    assert np.linalg.norm(o - [1.0, 0.0]) <= math.sqrt(2) * grid_resolution(bounds)


def test_oracle_disc():
    bounds = (np.array([-3.0, -3.0]), np.array([3.0, 3.0]))
    o = grid_project_oracle(lambda X: np.sum(X**2, axis=1) <= 1.0, np.array([2.0, 1.0]), bounds)
    np.testing.assert_allclose(o, np.array([2.0, 1.0]) / math.sqrt(5), atol=1e-6)


def test_oracle_refinement_is_monotone(box):
    p, amb = box
    tr = exploration_trial(p, amb, np.array([0.4, -0.2]), 200, 3)
    cs = build_conservative_set(tr.estimate, 3 * tr.beta, p.b, amb)
    bounds = (amb.box_lower, amb.box_upper)
    for seed in range(5):
        z = np.random.default_rng(seed).uniform(-5, 5, 2)
        x = project_conservative(cs, z).point
        prev = None
        for n in (25, 50, 100, 200):
            o = grid_project_oracle(cs.contains_many, z, bounds, coarse_n=n, levels=1)
            dist = float(np.linalg.norm(o - x))
            diag = math.sqrt(2) * 6.0 / (n - 1)
            if prev is not None:
                assert dist <= prev[0] + prev[1]
            prev = (dist, diag)


def test_trial_and_frequencies(box):
    p, amb = box
    trials = [exploration_trial(p, amb, np.zeros(2), 500, s, delta=0.05) for s in range(20)]
    f = event_frequencies(trials)
    assert f["trials"] == 20 and 0.0 <= f["coverage"] <= 1.0
    again = exploration_trial(p, amb, np.zeros(2), 500, 7, delta=0.05)
    assert np.array_equal(again.estimate.A_hat, trials[7].estimate.A_hat)
    with pytest.raises(InvalidInputError):
        event_frequencies([])


def test_check_record_row():
    r = CheckRecord("x", 3, 0.5, 1.0, True)
    assert r.row()[0] == "x" and r.row()[-1] in (True, 1, "True", "true")
