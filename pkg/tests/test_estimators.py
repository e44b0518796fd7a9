import numpy as np
import pytest

from mortar_sdg.assembly import SolutionFields, discretize, solve_problem
from mortar_sdg.errors import MeshConsistencyError
from mortar_sdg.estimators import (
    CHILDREN,
    OVERLAP,
    LocalEstimatorField,
    aggregate_indicators,
    compute_exact_errors,
    compute_local_estimators,
    global_estimates,
    write_breakdown_csv,
)
from mortar_sdg.mesh import build_initial_mesh, refine_red_green, uniform_partition
from mortar_sdg.quadrature import triangle_rule

from conftest import zero


def zero_fields(disc):
    nT, d = disc.fine.n_triangles, disc.basis.dim
    return SolutionFields(disc, np.zeros((nT, 2, d)), np.zeros((nT, d)), np.zeros(disc.dofs.n_lambda))


def local_field(values):
    v = np.asarray(values, dtype=float)
    terms = np.zeros((len(v), 5))
    terms[:, 0] = v
    return LocalEstimatorField(terms, terms.copy(), np.ones(len(v)), np.zeros(len(v), int), np.arange(len(v)) // 3)


def test_patch_solution_has_zero_estimators(nonmatching_mesh):
    sol, _ = solve_problem(nonmatching_mesh, zero, lambda x, y: x)
    loc = compute_local_estimators(sol, zero)
    assert loc.eta_sq.max() <= 1e-18 and loc.etabar_sq.max() <= 1e-18
    eta1, eta2 = global_estimates(loc)
    assert eta1 <= 1e-9 and eta2 <= 1e-9


def test_fp_jump_terms():
    a = 3 / (2 * np.sqrt(2))  # centroid-to-vertex distance 0.5 from (a, 0)
    disc = discretize(build_initial_mesh(uniform_partition(0, 0, a, a, 1, 1), grid=1), 1)
    sol = zero_fields(disc)
    sol.u[0] = 1.0  # child (v0, v1, c) of the triangle (0,0), (a,0), (a,a)
    loc = compute_local_estimators(sol, zero)
    L0 = np.sqrt(5) * a / 3  # the other cut edge, (v0, c)
    np.testing.assert_allclose(loc.eta_terms[:3, 4], [0.25 + L0**2, 0.25, L0**2], rtol=1e-13)
    np.testing.assert_allclose(loc.etabar_terms[:3, 4], [2.0, 1.0, 1.0], rtol=1e-13)
    other = np.delete(np.arange(5), 4)
    assert np.abs(loc.eta_terms[:, other]).max() == 0
    assert np.abs(loc.etabar_terms[:, other]).max() == 0
    assert np.abs(loc.eta_terms[3:]).max() == 0


def test_volume_term_is_h4_and_h2_times_area():
    disc = discretize(build_initial_mesh(uniform_partition(0, 0, 1, 1, 1, 1), grid=1), 1)
    loc = compute_local_estimators(zero_fields(disc), lambda x, y: np.ones_like(x))
    h, area = disc.fine.diameters(), disc.fine.areas()
    np.testing.assert_allclose(loc.eta_terms[:, 0], h**4 * area, rtol=1e-13)
    np.testing.assert_allclose(loc.etabar_terms[:, 0], h**2 * area, rtol=1e-13)
    # unit right triangle: h = sqrt(2), area 1/2
    assert np.isclose(np.sqrt(2) ** 4 * 0.5, 2.0) and np.isclose(np.sqrt(2) ** 2 * 0.5, 1.0)


def test_etabar_is_homogeneous_in_rho():
    part1 = uniform_partition(0, 0, 2, 1, 2, 1, rho=[1.0, 3.0])
    part5 = uniform_partition(0, 0, 2, 1, 2, 1, rho=[5.0, 15.0])
    f = lambda x, y: np.sin(2 * x) + y
    g = lambda x, y: x * y
    s1, _ = solve_problem(build_initial_mesh(part1, grid=[2, 3]), f, g)
    s5, _ = solve_problem(build_initial_mesh(part5, grid=[2, 3]), lambda x, y: 5 * f(x, y), g)
    np.testing.assert_allclose(s5.u, s1.u, atol=1e-10)
    e1 = global_estimates(compute_local_estimators(s1, f))[1]
    e5 = global_estimates(compute_local_estimators(s5, lambda x, y: 5 * f(x, y)))[1]
    assert np.isclose(e5, np.sqrt(5) * e1, rtol=1e-8)


def test_missing_multiplier_is_reported(nonmatching_disc):
    sol = zero_fields(nonmatching_disc)
    bad = sol.disc.dofs.lambda_edges.copy()
    bad[0] = -99
    from dataclasses import replace

    disc = replace(nonmatching_disc, dofs=replace(nonmatching_disc.dofs, lambda_edges=bad))
    with pytest.raises(MeshConsistencyError):
        compute_local_estimators(replace(sol, disc=disc), zero)


def test_children_aggregation():
    coarse = build_initial_mesh(uniform_partition(0, 0, 1, 1, 1, 1), grid=1)
    xi = aggregate_indicators(local_field([1, 2, 3, 0, 0, 0]), "eta1", coarse)
    np.testing.assert_allclose(xi.xi_sq, [6, 0])
    xi0 = aggregate_indicators(local_field(np.zeros(6)), "eta2", coarse)
    assert np.all(xi0.xi_sq == 0)


def test_aggregation_preserves_total_and_overlap_dominates():
    part = uniform_partition(0, 0, 1, 1, 2, 2)
    coarse = refine_red_green(build_initial_mesh(part, grid=2), [0, 7, 20])
    disc = discretize(coarse)
    sol, _ = solve_problem(coarse, lambda x, y: np.exp(x + y), zero)
    loc = compute_local_estimators(sol, lambda x, y: np.exp(x + y))
    for which in ("eta1", "eta2"):
        xi = aggregate_indicators(loc, which, coarse)
        assert np.isclose(xi.xi_sq.sum(), loc.values(which).sum(), rtol=1e-14)
        ov = aggregate_indicators(loc, which, coarse, OVERLAP, disc.fine)
        assert np.all(ov.xi_sq >= xi.xi_sq - 1e-15)
        assert ov.xi_sq.sum() > xi.xi_sq.sum()
    with pytest.raises(ValueError):
        aggregate_indicators(loc, "eta1", coarse, OVERLAP)
    with pytest.raises(ValueError):
        aggregate_indicators(loc, "eta1", coarse, "neighbours")


def test_overlap_pairs_on_unit_square():
    coarse = build_initial_mesh(uniform_partition(0, 0, 1, 1, 1, 1), grid=1)
    disc = discretize(coarse)
    ones = local_field(np.ones(6))
    xi = aggregate_indicators(ones, "eta1", coarse, OVERLAP, disc.fine)
    # every fine triangle touches both coarse triangles through the diagonal endpoints
    np.testing.assert_allclose(xi.xi_sq, [6, 6])


def test_global_estimates_pythagorean():
    e1, e2 = global_estimates(local_field([9, 16]))
    assert e1 == 5.0 and e2 == 5.0
    assert global_estimates(local_field([2.25]))[0] == 1.5


def test_exact_errors_of_zero_and_linear():
    disc = discretize(build_initial_mesh(uniform_partition(0, 0, 1, 1, 2, 1), grid=[1, 2]))
    sol = zero_fields(disc)
    assert compute_exact_errors(sol, zero, lambda x, y: (zero(x, y), zero(x, y))) == (0.0, 0.0)
    e0, e1 = compute_exact_errors(sol, lambda x, y: x, lambda x, y: (np.ones_like(x), np.zeros_like(x)))
    assert np.isclose(e0, 1 / np.sqrt(3), rtol=1e-13) and np.isclose(e1, 1.0, rtol=1e-13)


def test_exact_l2_error_matches_high_order_oracle(nonmatching_mesh):
    u = lambda x, y: x**2
    sol, _ = solve_problem(nonmatching_mesh, lambda x, y: -2 * np.ones_like(x), u)
    e0, _ = compute_exact_errors(sol, u, lambda x, y: (2 * x, np.zeros_like(x)))
    r = triangle_rule(20)
    T = np.arange(sol.disc.fine.n_triangles)
    x = sol.disc.geo.to_physical(T, r.points)
    d = u(x[..., 0], x[..., 1]) - sol.u_at(T, x)
    ref = np.sqrt(np.sum(r.weights * np.abs(sol.disc.geo.det)[:, None] * d**2))
    assert e0 > 1e-4
    assert abs(e0 - ref) <= 1e-6 * ref


def test_singular_point_rule_is_used():
    # |grad u|^2 ~ 1/(4 r) near the origin; a plain rule underestimates it
    part = uniform_partition(0, 0, 1, 1, 1, 1)
    disc = discretize(build_initial_mesh(part, grid=1))
    sol = zero_fields(disc)
    u = lambda x, y: (x**2 + y**2) ** 0.25
    grad = lambda x, y: (0.5 * x * (x**2 + y**2) ** -0.75, 0.5 * y * (x**2 + y**2) ** -0.75)
    _, plain = compute_exact_errors(sol, u, grad)
    _, graded = compute_exact_errors(sol, u, grad, singular_points=[(0.0, 0.0)])
    # exact: integral over the square of 1/(4 r) = 0.5 * asinh(1)
    exact = np.sqrt(0.5 * np.arcsinh(1.0))
    assert abs(graded - exact) < 1e-6 * exact
    assert abs(plain - exact) > 10 * abs(graded - exact)


def test_breakdown_csv(tmp_path, nonmatching_mesh):
    sol, _ = solve_problem(nonmatching_mesh, lambda x, y: np.ones_like(x), zero)
    loc = compute_local_estimators(sol, lambda x, y: np.ones_like(x))
    p = tmp_path / "est.csv"
    write_breakdown_csv(loc, p)
    lines = p.read_text().splitlines()
    assert len(lines) == len(loc) + 1
    assert lines[0].split(",")[:3] == ["element", "subdomain", "h_tau"]
    assert len(lines[0].split(",")) == 15
