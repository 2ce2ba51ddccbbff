from __future__ import annotations

import math

import numpy as np
import pytest

from safe_oco import rng as rngmod
from safe_oco.exploration import (
    BaselineSpec,
    choose_gamma,
    compute_gamma,
    exploration_action,
    generate_exploration,
    row_gamma_cap,
    sample_zeta,
    sample_zetas,
    sigma_zeta_sq,
    zeta_scale_for,
)
from safe_oco.geometry import contains_many


@pytest.mark.parametrize("delta_s, expected", [(0.5, 0.5), (1e-12, 1e-12), (3.0, 1 - 1e-9)])
def test_gamma_rule(delta_s, expected):
    assert compute_gamma(delta_s, 1.0) == pytest.approx(expected, rel=1e-15)


def test_clamped_gamma_is_still_safe(box):
    p, amb = box
    base = BaselineSpec.from_polytope(p, np.zeros(2))
    gamma = choose_gamma(base, p.L_A, amb)
    X = generate_exploration(base.x_s, gamma, zeta_scale_for(amb.L), 10_000, rngmod.stream(0, "explore"))
    assert contains_many(p, amb, X).all()


def test_one_dimensional_zeta_is_signed_scale():
    z = sample_zetas(np.random.default_rng(0), 2000, 1, 0.7)
    assert set(np.round(np.abs(z.ravel()), 12)) == {0.7}
    assert 0.45 < np.mean(z > 0) < 0.55


def test_zeta_on_sphere():
    z = sample_zetas(np.random.default_rng(1), 1000, 3, 1.0)
    np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, rtol=1e-12)
    assert np.linalg.norm(sample_zeta(np.random.default_rng(1), 3, 2.0)) == pytest.approx(2.0)


@pytest.mark.parametrize("d", [2, 5])
def test_zeta_moments(d):
    n, s = 100_000, 1.0
    z = sample_zetas(np.random.default_rng(2), n, d, s)
    assert np.all(np.abs(z.mean(0)) < 3 * s / math.sqrt(d * n))
    cov = np.cov(z.T)
    np.testing.assert_allclose(np.diag(cov), s * s / d, rtol=0.05)
    off = cov[~np.eye(d, dtype=bool)]
    assert np.all(np.abs(off) < 0.01 * s * s)
    assert sigma_zeta_sq(d, s) == s * s / d


def test_zeta_scale_caps_at_one():
    assert zeta_scale_for(0.3) == 0.3
    assert zeta_scale_for(5.0) == 1.0


def test_action_examples():
    x_s = np.array([0.3, -0.2])
    np.testing.assert_array_equal(exploration_action(x_s, 0.0, np.array([1.0, 0.0])), x_s)
    np.testing.assert_allclose(exploration_action(np.zeros(2), 0.5, np.array([1.0, 0.0])), [0.5, 0.0])


def test_row_cap_handles_negative_baseline_slack(triangle):
    p, amb = triangle
    base = BaselineSpec.from_polytope(p, np.array([0.25, 0.25]))
    np.testing.assert_allclose(base.b_s, [0.5, -0.25, -0.25])
    cap = row_gamma_cap(p.b, base.b_s, p.L_A, 1.0)
    gamma = choose_gamma(base, p.L_A, amb)
    assert gamma <= cap < compute_gamma(base.delta_s, p.L_A)
    X = generate_exploration(base.x_s, gamma, 1.0, 20_000, np.random.default_rng(3))
    assert contains_many(p, amb, X).all()


def test_exploration_is_seeded():
    a = generate_exploration(np.zeros(2), 0.5, 1.0, 50, rngmod.stream(9, "explore"))
    b = generate_exploration(np.zeros(2), 0.5, 1.0, 50, rngmod.stream(9, "explore"))
    c = generate_exploration(np.zeros(2), 0.5, 1.0, 50, rngmod.stream(10, "explore"))
    assert np.array_equal(a, b) and not np.array_equal(a, c)
