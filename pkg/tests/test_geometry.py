from __future__ import annotations

import numpy as np
import pytest

from safe_oco.errors import InvalidInputError
from safe_oco.geometry import (
    AmbientSet,
    ShrunkPolytope,
    TruePolytope,
    contains,
    contains_many,
    halfspaces,
    safety_margin,
    shrunk_contains,
    vertices,
)


def test_box_matrix_layout(box):
    p, _ = box
    np.testing.assert_array_equal(p.A, [[1, 0], [-1, 0], [0, 1], [0, -1]])
    np.testing.assert_array_equal(p.b, [3, 3, 3, 3])
    assert p.L_A == 1.0


@pytest.mark.parametrize("x, inside", [((0, 0), True), ((3.0001, 0), False), ((3, -3), True)])
def test_box_membership(box, x, inside):
    p, amb = box
    assert contains(p, amb, np.array(x, float)) is inside


def test_triangle_baseline_inside(triangle):
    p, amb = triangle
    assert contains(p, amb, np.array([0.25, 0.25]))


@pytest.mark.parametrize("x, margin", [((0, 0), (3, 3, 3, 3)), ((3, 0), (0, 6, 3, 3)), ((4, 0), (-1, 7, 3, 3))])
def test_safety_margin(box, x, margin):
    p, _ = box
    np.testing.assert_array_equal(safety_margin(p, np.array(x, float)), margin)


@pytest.mark.parametrize("tau, x, inside", [(1.0, (0, 0), True), (1.0, (2.5, 0), False), (3.0, (0, 0), True)])
def test_shrunk_membership(box, tau, x, inside):
    p, _ = box
    assert shrunk_contains(ShrunkPolytope(p, tau), np.array(x, float)) is inside


def test_contains_many_matches_scalar(box):
    p, amb = box
    X = np.random.default_rng(0).uniform(-4, 4, (500, 2))
    vec = contains_many(p, amb, X)
    assert vec.tolist() == [contains(p, amb, x) for x in X]


def test_vertices_of_box_and_triangle(box, triangle):
    v = vertices(*box)
    assert sorted(map(tuple, np.round(v, 12))) == [(-3, -3), (-3, 3), (3, -3), (3, 3)]
    v = vertices(*triangle)
    assert sorted(map(tuple, np.round(v, 12))) == [(0, 0), (0, 1), (1, 0)]


def test_halfspaces_stack_box_rows(box):
    C, h = halfspaces(*box)
    assert C.shape == (8, 2) and h.shape == (8,)


@pytest.mark.parametrize(
    "A, b",
    [
        (np.ones((2, 2)), np.ones(3)),
        (np.array([[np.nan, 0.0]]), np.ones(1)),
        (np.ones(2), np.ones(1)),
    ],
)
def test_polytope_rejects_bad_input(A, b):
    with pytest.raises(InvalidInputError):
        TruePolytope(A, b)


def test_ambient_rejects_inverted_box():
    with pytest.raises(InvalidInputError):
        AmbientSet(np.array([1.0, 0.0]), np.array([0.0, 1.0]))


def test_negative_margin_rejected(box):
    with pytest.raises(InvalidInputError):
        ShrunkPolytope(box[0], -1.0)


def test_dimension_mismatch(box):
    p, amb = box
    with pytest.raises(InvalidInputError):
        contains(p, amb, np.zeros(3))
