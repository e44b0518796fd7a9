import numpy as np
import pytest

from mortar_sdg.assembly import discretize
from mortar_sdg.mesh import build_initial_mesh, uniform_partition
from mortar_sdg.spaces import (
    MORTAR,
    U_CONTINUITY,
    U_DIRICHLET,
    Z_NORMAL,
    SpaceConfig,
    build_constraints,
    evaluate_basis,
    lagrange_basis,
    legendre_edge,
)
from mortar_sdg.fine_mesh import subdivide_centroid

from test_fine_mesh import single_triangle_mesh


def unit_square(k=1):
    return discretize(build_initial_mesh(uniform_partition(0, 0, 1, 1, 1, 1), grid=1), k)


def two_subdomains(grid, k=1):
    return discretize(build_initial_mesh(uniform_partition(0, 0, 2, 1, 2, 1), grid=grid), k)


def constraints(disc, g=None):
    return build_constraints(disc.fine, disc.layout, disc.dofs, disc.cfg, g, disc.geo)


def test_raw_dimensions_single_subdomain():
    d = unit_square()
    assert (d.dofs.n_u, d.dofs.n_z, d.dofs.n_lambda) == (18, 36, 0)


def test_lambda_dimension_two_subdomains():
    d = two_subdomains([1, 2])
    assert len(d.layout.nonmortar_edges()) == 2
    assert d.dofs.n_lambda == 4
    assert two_subdomains([1, 1]).dofs.n_lambda == 2


def test_k2_single_triangle_dofs():
    cfg = SpaceConfig(2)
    assert cfg.n_local == 6
    with pytest.raises(ValueError):
        SpaceConfig(0)


def test_constraint_counts_unit_square():
    counts = constraints(unit_square()).counts()
    assert counts == {"U_CONTINUITY": 2, "U_DIRICHLET": 8, "Z_NORMAL": 12, "MORTAR": 0}


def test_mortar_rows_two_subdomains():
    counts = constraints(two_subdomains([1, 2])).counts()
    assert counts["MORTAR"] == 4


@pytest.mark.parametrize("k", [1, 2])
def test_global_constant_satisfies_homogeneous_rows(k):
    d = two_subdomains([1, 2], k)
    c = constraints(d)
    x = np.zeros(d.dofs.n_z + d.dofs.n_u)
    x[d.dofs.n_z :] = 3.5
    r = c.matrix @ x
    rows = c.rows_of(U_CONTINUITY, MORTAR)
    assert np.abs(r[rows]).max() < 1e-13
    # constant z in the x direction has zero normal jump everywhere
    x[:] = 0.0
    for t in range(d.fine.n_triangles):
        x[d.dofs.z_dofs(t, 0)] = 2.0
    assert np.abs((c.matrix @ x)[c.rows_of(Z_NORMAL)]).max() < 1e-13


def test_dirichlet_moments_of_linear_trace():
    d = unit_square()
    g = lambda x, y: x + 2 * y
    c = constraints(d, g)
    u = np.zeros((d.fine.n_triangles, d.basis.dim))
    pts = d.geo.to_physical(np.arange(d.fine.n_triangles), d.basis.nodes)
    u[:] = g(pts[..., 0], pts[..., 1])
    x = np.concatenate([np.zeros(d.dofs.n_z), u.ravel()])
    rows = c.rows_of(U_DIRICHLET)
    np.testing.assert_allclose((c.matrix @ x)[rows], c.rhs[rows], atol=1e-14)


def test_nodal_basis_at_vertex():
    b = lagrange_basis(1)
    np.testing.assert_allclose(b.values(np.array([0.0, 0.0])), [1, 0, 0])


@pytest.mark.parametrize("k", [1, 2, 3])
def test_partition_of_unity(k):
    b = lagrange_basis(k)
    pts = np.random.default_rng(k).dirichlet([1, 1, 1], 20)[:, 1:]
    np.testing.assert_allclose(b.values(pts).sum(axis=-1), 1.0, atol=1e-13)


def test_linear_reproduction_gradient():
    fine = subdivide_centroid(single_triangle_mesh())
    from mortar_sdg.spaces import ElementGeometry

    geo = ElementGeometry.from_mesh(fine)
    b = lagrange_basis(1)
    for tri in range(3):
        coef = geo.to_physical(np.array([tri]), b.nodes)[0, :, 0]
        for ref in ([0.2, 0.3], [0.0, 1.0], [1 / 3, 1 / 3]):
            vals, grads, jac = evaluate_basis(fine, 1, tri, ref, geo)
            np.testing.assert_allclose(coef @ grads, [1.0, 0.0], atol=1e-14)
            x = geo.to_physical(np.array([tri]), np.array([ref]))[0, 0, 0]
            assert np.isclose(coef @ vals, x)


def test_evaluate_basis_rejects_outside_point():
    fine = subdivide_centroid(single_triangle_mesh())
    with pytest.raises(ValueError):
        evaluate_basis(fine, 1, 0, [0.8, 0.8])


def test_legendre_edge_orthonormal():
    from mortar_sdg.quadrature import gauss_segment

    r = gauss_segment(5)
    L = 0.37
    P = legendre_edge(4, r.points, L)
    G = np.einsum("q,qa,qb->ab", r.weights * L, P, P)
    np.testing.assert_allclose(G, np.eye(4), atol=1e-14)


def test_constraint_rows_full_rank():
    d = two_subdomains([1, 2])
    A = constraints(d).matrix.toarray()
    assert np.linalg.matrix_rank(A) == A.shape[0]
