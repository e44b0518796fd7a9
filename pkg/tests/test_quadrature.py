from math import factorial

import numpy as np
import pytest

from mortar_sdg.quadrature import (
    corner_graded_rule,
    gauss_segment,
    subdivided_triangle_rule,
    triangle_rule,
)


def monomial_integral(a, b):
    """Integral of x^a y^b over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def apply(rule, a, b):
    x, y = rule.points[:, 0], rule.points[:, 1]
    return float(np.sum(rule.weights * x**a * y**b))


def test_gauss_segment_exactness():
    r = gauss_segment(3)
    for p in range(6):
        assert np.isclose(np.sum(r.weights * r.points**p), 1 / (p + 1), rtol=1e-14)
    with pytest.raises(ValueError):
        gauss_segment(0)


@pytest.mark.parametrize("degree", [0, 1, 2, 4, 7, 10])
def test_triangle_rule_exact_to_degree(degree):
    r = triangle_rule(degree)
    assert np.all(r.weights > 0)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            assert abs(apply(r, a, b) - monomial_integral(a, b)) < 1e-14


def test_degree_ten_rule_size():
    assert len(triangle_rule(10)) == 36


@pytest.mark.parametrize("corner", [0, 1, 2])
def test_corner_graded_rule_exact(corner):
    r = corner_graded_rule(6, corner)
    for a in range(7):
        for b in range(7 - a):
            assert abs(apply(r, a, b) - monomial_integral(a, b)) < 1e-14


def test_corner_graded_rule_integrates_inverse_power():
    # integral of r^(-3/2) over the reference triangle, polar about the origin
    from scipy.integrate import quad

    exact = quad(lambda t: (np.cos(t) + np.sin(t)) ** -0.5 / 0.5, 0, np.pi / 2)[0]
    r = corner_graded_rule(8, 0)
    rad = np.linalg.norm(r.points, axis=1)
    assert np.isclose(np.sum(r.weights * rad**-1.5), exact, rtol=1e-7)


@pytest.mark.parametrize("corner", [None, 0, 2])
def test_subdivided_rule_is_exact_and_sums_to_area(corner):
    r = subdivided_triangle_rule(4, 3, corner)
    assert np.isclose(r.weights.sum(), 0.5, rtol=1e-14)
    for a in range(5):
        for b in range(5 - a):
            assert abs(apply(r, a, b) - monomial_integral(a, b)) < 1e-14


def test_graded_tip_improves_corner_singularity():
    from scipy.integrate import quad

    exact = quad(lambda t: 2 * (np.cos(t) + np.sin(t)) ** -1.0, 0, np.pi / 2)[0] / 2
    plain = subdivided_triangle_rule(10, 3, 0)
    tip = subdivided_triangle_rule(10, 3, 0, graded_tip=True)
    f = lambda r: np.sum(r.weights / np.linalg.norm(r.points, axis=1))
    assert abs(f(tip) - exact) < 1e-6 * exact
    assert abs(f(tip) - exact) < 1e-3 * abs(f(plain) - exact)
