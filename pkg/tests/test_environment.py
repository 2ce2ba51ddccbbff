from __future__ import annotations

import math
import random

import numpy as np
import pytest

from safe_oco import rng as rngmod
from safe_oco.environment import (
    DATA_DIR_ENV,
    LBMP_HEADER,
    ZONES,
    Environment,
    datacenter_polytope,
    load_lbmp_csv,
    make_datacenter,
    make_f1,
    make_f2,
    make_f3,
    synthetic_prices,
)
from safe_oco.errors import DataError, InvalidInputError, ParseError
from safe_oco.exploration import BaselineSpec
from safe_oco.geometry import AmbientSet


def _env(p, amb, x_s, noise, seed=0):
    return Environment(p, amb, BaselineSpec.from_polytope(p, x_s), noise, seed)


def test_noiseless_observation(box):
    p, amb = box
    env = _env(p, amb, np.zeros(2), 0.0)
    x = np.array([1.5, -0.5])
    np.testing.assert_array_equal(env.observe(x), p.A @ x)


def test_noise_variance_at_origin(box):
    p, amb = box
    std = math.sqrt(1e-3)
    env = _env(p, amb, np.zeros(2), std)
    Y = env.observe_many(np.zeros((100_000, 2)))
    np.testing.assert_allclose(Y.var(axis=0), std**2, rtol=0.05)


def test_observe_many_matches_repeated_observe(box):
    p, amb = box
    X = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    a = _env(p, amb, np.zeros(2), 0.1, seed=4).observe_many(X)
    env = _env(p, amb, np.zeros(2), 0.1, seed=4)
    b = np.array([env.observe(x) for x in X])
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


def test_baseline_must_be_strictly_safe(box):
    p, amb = box
    with pytest.raises(InvalidInputError):
        _env(p, amb, np.array([3.0, 0.0]), 0.1)


def test_f1_examples():
    s = make_f1(np.random.default_rng(0), 1.0, 1.0, 2, 5)
    assert s.value(1, [1, 1]) == 3.0
    np.testing.assert_array_equal(s.grad(1, [1, 1]), [1, 1])
    s = make_f1(np.random.default_rng(0), 0.5, 2.0, 2, 50)
    assert all(s.value(t, [0, 0]) == 1.0 for t in range(1, 51))
    assert s.G == pytest.approx(2 * math.sqrt(2))


def test_f2_examples(box):
    s = make_f2(np.random.default_rng(3), 0.5, 2.0, box[1], 100)
    assert np.linalg.norm(s.x_bar) == pytest.approx(2.5, rel=1e-15)
    x = s.coef[6] * s.x_bar
    assert s.value(7, x) == 0.0
    np.testing.assert_array_equal(s.grad(7, x), 0.0)


def test_f3_examples():
    T = 1001
    s = make_f3(np.random.default_rng(5), 2, T)
    # replay the first draw: the growing term, then subtract it off
    c1 = np.random.default_rng(5).uniform(-1, 1, (T, 2)) * (np.arange(1, T + 1) ** 0.1)[:, None]
    assert np.all(np.abs(c1[0]) <= 1.0)
    # what is left is a drift in [-1, 0] plus the +-1 flip, non-negative iff the flip is +1
    rest = s.coef - c1
    assert np.array_equal(rest[:, 0] >= 0, rest[:, 1] >= 0)
    assert int(np.sum(rest[:, 0] >= 0)) in (T // 2, (T + 1) // 2)
    x = np.array([0.3, -0.7])
    np.testing.assert_array_equal(s.grad(10, x), s.coef[9])


def test_datacenter_examples():
    amb = AmbientSet(np.zeros(5), np.full(5, 30.0))
    prices = synthetic_prices(20, 1)
    s = make_datacenter(prices, 5.7720, 20, amb)
    assert s.value(1, np.zeros(5)) == pytest.approx(100 * 5.7720, rel=1e-15)
    np.testing.assert_allclose(s.grad(1, np.zeros(5)), prices.prices[0] - 32 * 5.7720)
    with pytest.raises(InvalidInputError):
        s.value(1, np.full(5, -0.1))


def _fd_scenarios():
    amb2 = AmbientSet.cube(3.0, 2)
    amb5 = AmbientSet(np.zeros(5), np.full(5, 30.0))
    return [
        (make_f1(np.random.default_rng(0), 0.5, 2.0, 2, 100), amb2),
        (make_f2(np.random.default_rng(1), 0.5, 2.0, amb2, 100), amb2),
        (make_f3(np.random.default_rng(2), 2, 100), amb2),
        (make_datacenter(synthetic_prices(100, 3), 5.772, 100, amb5), amb5),
    ]


@pytest.mark.parametrize("scenario, amb", _fd_scenarios(), ids=["f1", "f2", "f3", "datacenter"])
def test_finite_difference_gradients(scenario, amb):
    rng = np.random.default_rng(11)
    h = 1e-6
    span = amb.box_upper - amb.box_lower
    for _ in range(100):
        t = int(rng.integers(1, scenario.T + 1))
        x = amb.box_lower + span * rng.uniform(0.02, 0.98, amb.d)
        g = scenario.grad(t, x)
        fd = np.array([
            (scenario.value(t, x + h * e) - scenario.value(t, x - h * e)) / (2 * h) for e in np.eye(amb.d)
        ])
        assert np.linalg.norm(fd - g) <= 1e-5 * max(np.linalg.norm(g), 1.0)


@pytest.mark.parametrize("scenario, amb", _fd_scenarios(), ids=["f1", "f2", "f3", "datacenter"])
def test_gradient_bound(scenario, amb):
    rng = np.random.default_rng(12)
    for _ in range(10_000 // 100):
        t = rng.integers(1, scenario.T + 1, 100)
        X = amb.sample(rng, 100)
        norms = [np.linalg.norm(scenario.grad(int(ti), x)) for ti, x in zip(t, X)]
        assert max(norms) <= scenario.G * (1 + 1e-12)


@pytest.mark.parametrize("scenario, amb", _fd_scenarios(), ids=["f1", "f2", "f3", "datacenter"])
def test_convexity_along_segments(scenario, amb):
    rng = np.random.default_rng(13)
    for _ in range(200):
        t = int(rng.integers(1, scenario.T + 1))
        x, y = amb.sample(rng, 2)
        lam = rng.uniform()
        mid = scenario.value(t, lam * x + (1 - lam) * y)
        assert mid <= lam * scenario.value(t, x) + (1 - lam) * scenario.value(t, y) + 1e-9 * (1 + abs(mid))


@pytest.mark.parametrize("scenario, amb", _fd_scenarios(), ids=["f1", "f2", "f3", "datacenter"])
def test_vectorised_values_and_prefix(scenario, amb):
    rng = np.random.default_rng(14)
    X = amb.sample(rng, scenario.T)
    ts = np.arange(1, scenario.T + 1)
    vec = scenario.values(ts, X)
    ref = np.array([scenario.value(int(t), x) for t, x in zip(ts, X)])
    np.testing.assert_allclose(vec, ref, rtol=1e-12, atol=1e-12)
    x = X[0]
    pre = scenario.prefix(37)
    total = sum(scenario.value(t, x) for t in range(1, 38))
    assert pre.value(x) == pytest.approx(total, rel=1e-10)
    np.testing.assert_allclose(pre.grad(x), sum(scenario.grad(t, x) for t in range(1, 38)), rtol=1e-10)


def test_round_out_of_range():
    s = make_f1(np.random.default_rng(0), 0.5, 2.0, 2, 10)
    with pytest.raises(InvalidInputError):
        s.value(11, [0, 0])
    with pytest.raises(InvalidInputError):
        s.value(0, [0, 0])


def test_scenarios_are_seeded(box):
    a = make_f2(rngmod.stream(3, "scenario"), 0.5, 2.0, box[1], 50)
    b = make_f2(rngmod.stream(3, "scenario"), 0.5, 2.0, box[1], 50)
    assert np.array_equal(a.coef, b.coef) and np.array_equal(a.x_bar, b.x_bar)


# ---------------------------------------------------------------------------
# price files

def _write(path, rows, header=LBMP_HEADER):
    lines = [",".join(header)] + [",".join(map(str, r)) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _rows(n_hours=3):
    out = []
    for h in range(n_hours):
        for k, z in enumerate(ZONES):
            out.append((f"2019-07-01T{h:02d}:00:00", z, 20.0 + 10 * h + k))
    return out


def test_minimal_file(tmp_path):
    t = load_lbmp_csv(_write(tmp_path / "p.csv", _rows(1)))
    assert t.prices.shape == (1, 5) and not t.synthetic
    np.testing.assert_array_equal(t.prices[0], [20, 21, 22, 23, 24])


def test_shuffled_rows_give_same_matrix(tmp_path):
    rows = _rows(4)
    a = load_lbmp_csv(_write(tmp_path / "a.csv", rows))
    random.Random(0).shuffle(rows)
    b = load_lbmp_csv(_write(tmp_path / "b.csv", rows))
    np.testing.assert_array_equal(a.prices, b.prices)
    assert a.timestamps == b.timestamps


def test_duplicate_row(tmp_path):
    rows = _rows(1) + [_rows(1)[2]]
    with pytest.raises(DataError, match="duplicate"):
        load_lbmp_csv(_write(tmp_path / "p.csv", rows))


def test_missing_zone_reports_line(tmp_path):
    rows = _rows(2)
    del rows[7]
    with pytest.raises(ParseError) as exc:
        load_lbmp_csv(_write(tmp_path / "p.csv", rows))
    assert exc.value.line == 7


@pytest.mark.parametrize("bad, line", [
    (("2019-07-01T00:00:00", "genesee"), 3),
    (("yesterday", "genesee", 3.0), 3),
    (("2019-07-01T00:00:00", "atlantis", 3.0), 3),
    (("2019-07-01T00:00:00", "genesee", "cheap"), 3),
    (("2019-07-01T00:00:00", "genesee", "nan"), 3),
])
def test_parse_errors_carry_line(tmp_path, bad, line):
    rows = [_rows(1)[0], bad]
    with pytest.raises(ParseError) as exc:
        load_lbmp_csv(_write(tmp_path / "p.csv", rows))
    assert exc.value.line == line


def test_bad_header(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_lbmp_csv(_write(tmp_path / "p.csv", _rows(1), header=("time", "zone", "price")))
    assert exc.value.line == 1


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_lbmp_csv(tmp_path / "nope.csv")


def test_data_dir_lookup(tmp_path, monkeypatch):
    _write(tmp_path / "p.csv", _rows(2))
    monkeypatch.setenv(DATA_DIR_ENV, str(tmp_path))
    monkeypatch.chdir("/")
    assert load_lbmp_csv("p.csv").prices.shape == (2, 5)


def test_synthetic_prices():
    a = synthetic_prices(1000, 7)
    assert a.synthetic and a.prices.shape == (1000, 5)
    assert a.prices.min() >= 10 and a.prices.max() <= 100
    assert np.array_equal(a.prices, synthetic_prices(1000, 7).prices)


def test_short_table_rejected():
    amb = AmbientSet(np.zeros(5), np.full(5, 30.0))
    with pytest.raises(DataError):
        make_datacenter(synthetic_prices(10, 0), 5.772, 11, amb)


def test_datacenter_polytope():
    p = datacenter_polytope()
    assert p.m == 6 and p.d == 5
    np.testing.assert_array_equal(p.b, [30, 30, 30, 30, 30, 100])
