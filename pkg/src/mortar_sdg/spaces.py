"""
Raw elementwise polynomial spaces and the linear constraints that cut the
staggered spaces out of them.

Every fine triangle carries a full P^k basis for u and for each component
of z. Continuity of u across coarse edges, normal continuity of z across
subdivision edges, Dirichlet data and mortar matching are represented as
sparse constraint rows (moments against an orthonormal Legendre basis of
each edge) rather than built into a conforming basis.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sps
from numpy.polynomial import legendre

from .fine_mesh import FP, FU_BOUNDARY, FU_INTERIOR
from .quadrature import gauss_segment

U_CONTINUITY, U_DIRICHLET, Z_NORMAL, MORTAR = 0, 1, 2, 3
KIND_NAMES = {
    U_CONTINUITY: "U_CONTINUITY",
    U_DIRICHLET: "U_DIRICHLET",
    Z_NORMAL: "Z_NORMAL",
    MORTAR: "MORTAR",
}


@dataclass(frozen=True)
class SpaceConfig:
    k: int = 1

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("polynomial degree k must be an integer >= 1")

    @property
    def n_local(self):
        return (self.k + 1) * (self.k + 2) // 2


class LagrangeBasis:
    """
    Nodal P^k basis on the reference triangle with equispaced nodes
    ordered row by row from (0, 0).
    """

    def __init__(self, k):
        self.k = k
        self.exponents = [(a, b) for b in range(k + 1) for a in range(k + 1 - b)]
        self.nodes = np.array(
            [(i / k, j / k) for j in range(k + 1) for i in range(k + 1 - j)], dtype=float
        )
        V = self._monomials(self.nodes)
        self.coeffs = np.linalg.inv(V)

    @property
    def dim(self):
        return len(self.exponents)

    def _monomials(self, pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        return np.stack([x**a * y**b for a, b in self.exponents], axis=-1)

    def _monomial_grads(self, pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        gx, gy = [], []
        for a, b in self.exponents:
            gx.append(a * x ** max(a - 1, 0) * y**b if a > 0 else np.zeros_like(x))
            gy.append(b * x**a * y ** max(b - 1, 0) if b > 0 else np.zeros_like(y))
        return np.stack([np.stack(gx, -1), np.stack(gy, -1)], axis=-1)

    def values(self, pts):
        """Basis values, shape pts.shape[:-1] + (dim,)."""
        return self._monomials(pts) @ self.coeffs

    def grads(self, pts):
        """Reference gradients, shape pts.shape[:-1] + (dim, 2)."""
        g = self._monomial_grads(pts)
        return np.einsum("...mc,ma->...ac", g, self.coeffs)


@lru_cache(maxsize=None)
def lagrange_basis(k):
    return LagrangeBasis(k)


@dataclass(frozen=True)
class ElementGeometry:
    """Affine maps x = origin + jac @ xi of all fine triangles."""

    origin: np.ndarray
    jac: np.ndarray
    inv_jac: np.ndarray
    det: np.ndarray

    @classmethod
    def from_mesh(cls, fine):
        p = fine.points()
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1] / det
        inv[:, 1, 1] = J[:, 0, 0] / det
        inv[:, 0, 1] = -J[:, 0, 1] / det
        inv[:, 1, 0] = -J[:, 1, 0] / det
        return cls(p[:, 0].copy(), J, inv, det)

    def to_physical(self, tris, ref):
        """ref (nq, 2) or (n, nq, 2) -> physical points (n, nq, 2)."""
        ref = np.asarray(ref)
        if ref.ndim == 2:
            return self.origin[tris, None, :] + np.einsum("tij,qj->tqi", self.jac[tris], ref)
        return self.origin[tris, None, :] + np.einsum("tij,tqj->tqi", self.jac[tris], ref)

    def to_reference(self, tris, pts):
        """Physical points (n, nq, 2) -> reference coordinates in triangles ``tris``."""
        d = np.asarray(pts) - self.origin[tris, None, :]
        return np.einsum("tij,tqj->tqi", self.inv_jac[tris], d)

    def physical_grads(self, tris, ref_grads):
        """Map reference basis gradients (..., d, 2) with J^{-T}."""
        inv = self.inv_jac[tris]
        if ref_grads.ndim == 3:
            return np.einsum("tji,qaj->tqai", inv, ref_grads)
        return np.einsum("tji,tqaj->tqai", inv, ref_grads)


def evaluate_basis(fine, k, tri, ref_point, geo=None, tol=1e-12):
    """
    Basis values, physical gradients and Jacobian of one triangle at one
    reference point.
    """
    ref_point = np.asarray(ref_point, dtype=float)
    bary = np.array([1.0 - ref_point.sum(), ref_point[0], ref_point[1]])
    if np.any(bary < -tol):
        raise ValueError(f"point {ref_point} lies outside the reference triangle")
    basis = lagrange_basis(k)
    geo = geo if geo is not None else ElementGeometry.from_mesh(fine)
    vals = basis.values(ref_point)
    g = basis.grads(ref_point)
    grads = g @ geo.inv_jac[tri]
    return vals, grads, geo.jac[tri]


def legendre_edge(npoly, s, length):
    """
    Orthonormal Legendre polynomials on an edge of physical ``length``,
    evaluated at local parameters s in [0, 1]; shape s.shape + (npoly,).
    """
    s = np.asarray(s, dtype=float)
    x = 2.0 * s - 1.0
    out = np.empty(s.shape + (npoly,))
    for j in range(npoly):
        c = np.zeros(j + 1)
        c[j] = 1.0
        out[..., j] = legendre.legval(x, c) * np.sqrt((2 * j + 1))
    return out / np.sqrt(length)


@dataclass(frozen=True)
class DofMap:
    """
    Global numbering: z block, then u block, then lambda block.

    z dof of triangle t, component c, basis a: 2*d*t + c*d + a.
    u dof: n_z + d*t + a. lambda dof j of the m-th non-mortar edge:
    n_z + n_u + (k+1)*m + j.
    """

    k: int
    n_local: int
    n_triangles: int
    lambda_edges: np.ndarray

    @property
    def n_z(self):
        return 2 * self.n_local * self.n_triangles

    @property
    def n_u(self):
        return self.n_local * self.n_triangles

    @property
    def n_lambda(self):
        return (self.k + 1) * len(self.lambda_edges)

    @property
    def n_total(self):
        return self.n_z + self.n_u + self.n_lambda

    @property
    def z_range(self):
        return range(0, self.n_z)

    @property
    def u_range(self):
        return range(self.n_z, self.n_z + self.n_u)

    @property
    def lambda_range(self):
        return range(self.n_z + self.n_u, self.n_total)

    def z_dofs(self, tris, comp):
        d = self.n_local
        return 2 * d * np.asarray(tris)[..., None] + comp * d + np.arange(d)

    def u_dofs(self, tris):
        d = self.n_local
        return self.n_z + d * np.asarray(tris)[..., None] + np.arange(d)

    def lambda_index(self):
        """Map edge id -> position in lambda_edges, as a dict."""
        return {int(e): m for m, e in enumerate(self.lambda_edges)}

    def lambda_dofs(self, pos):
        return self.n_z + self.n_u + (self.k + 1) * np.asarray(pos)[..., None] + np.arange(self.k + 1)


def build_dof_map(fine, layout, cfg):
    return DofMap(cfg.k, cfg.n_local, fine.n_triangles, layout.nonmortar_edges())


@dataclass(frozen=True)
class ConstraintSet:
    """
    Constraint rows over the unknown vector (z, u, lambda) layout.

    ``matrix`` rows act on the raw z/u dofs (columns 0..n_z+n_u); kinds and
    owning edges per row; ``rhs`` carries Dirichlet moments. MORTAR rows are
    the matching conditions sum_i c_i(u, psi) and are paired with the
    lambda unknowns in the global system.
    """

    matrix: sps.csr_matrix
    rhs: np.ndarray
    kind: np.ndarray
    edge: np.ndarray

    def rows_of(self, *kinds):
        return np.flatnonzero(np.isin(self.kind, kinds))

    def block(self, *kinds):
        r = self.rows_of(*kinds)
        return self.matrix[r], self.rhs[r]

    def counts(self):
        return {KIND_NAMES[k]: int(np.sum(self.kind == k)) for k in KIND_NAMES}


def edge_points(fine, edges, s):
    """Physical points (nE, nq, 2) at local parameters s along fine edges."""
    v = fine.vertices[fine.edge_vertices[edges]]
    return v[:, None, 0, :] + np.asarray(s)[None, :, None] * (v[:, None, 1, :] - v[:, None, 0, :])


def trace_values(fine, geo, basis, tris, pts):
    """Basis values (n, nq, d) of triangles ``tris`` at physical points (n, nq, 2)."""
    return basis.values(geo.to_reference(tris, pts))


def _edge_moment_rows(fine, geo, basis, edges, two_sided, npts):
    """
    Shared machinery: Legendre-weighted trace integrals on ``edges``.

    Returns (weights (nE, nq), psi (nE, nq, k+1), per-side basis values).
    """
    k = basis.k
    rule = gauss_segment(npts)
    L = fine.edge_lengths()[edges]
    pts = edge_points(fine, edges, rule.points)
    psi = legendre_edge(k + 1, rule.points, 1.0)[None, :, :] / np.sqrt(L)[:, None, None]
    w = rule.weights[None, :] * L[:, None]
    sides = [trace_values(fine, geo, basis, fine.edge_tris[edges, 0], pts)]
    if two_sided:
        sides.append(trace_values(fine, geo, basis, fine.edge_tris[edges, 1], pts))
    return w, psi, sides, pts


def build_constraints(fine, layout, dofs, cfg, g=None, geo=None):
    """
    All constraint rows: (k+1) per FU_INTERIOR edge, per FU_BOUNDARY edge,
    per FP edge and per non-mortar interface edge.
    """
    geo = geo if geo is not None else ElementGeometry.from_mesh(fine)
    basis = lagrange_basis(cfg.k)
    k, d = cfg.k, basis.dim
    nk = k + 1
    rows, cols, vals = [], [], []
    kinds, edges_of_row, rhs = [], [], []
    nrow = 0

    def emit(r, c, v):
        rows.append(np.asarray(r).ravel())
        cols.append(np.asarray(c).ravel())
        vals.append(np.asarray(v).ravel())

    # u continuity on interior coarse edges
    E = fine.edges_with_tag(FU_INTERIOR)
    if len(E):
        w, psi, (p0, p1), _ = _edge_moment_rows(fine, geo, basis, E, True, k + 1)
        m0 = np.einsum("eq,eqj,eqa->eja", w, psi, p0)
        m1 = np.einsum("eq,eqj,eqa->eja", w, psi, p1)
        r = nrow + np.arange(len(E) * nk).reshape(len(E), nk)
        c0 = dofs.u_dofs(fine.edge_tris[E, 0])
        c1 = dofs.u_dofs(fine.edge_tris[E, 1])
        emit(np.broadcast_to(r[:, :, None], m0.shape), np.broadcast_to(c0[:, None, :], m0.shape), m0)
        emit(np.broadcast_to(r[:, :, None], m1.shape), np.broadcast_to(c1[:, None, :], m1.shape), -m1)
        nrow += len(E) * nk
        kinds.append(np.full(len(E) * nk, U_CONTINUITY))
        edges_of_row.append(np.repeat(E, nk))
        rhs.append(np.zeros(len(E) * nk))

    # Dirichlet moments on boundary edges
    E = fine.edges_with_tag(FU_BOUNDARY)
    if len(E):
        w, psi, (p0,), pts = _edge_moment_rows(fine, geo, basis, E, False, k + 3)
        m0 = np.einsum("eq,eqj,eqa->eja", w, psi, p0)
        r = nrow + np.arange(len(E) * nk).reshape(len(E), nk)
        c0 = dofs.u_dofs(fine.edge_tris[E, 0])
        emit(np.broadcast_to(r[:, :, None], m0.shape), np.broadcast_to(c0[:, None, :], m0.shape), m0)
        if g is None:
            gval = np.zeros(pts.shape[:2])
        else:
            gval = g(pts[..., 0], pts[..., 1])
        rhs.append(np.einsum("eq,eqj,eq->ej", w, psi, gval).ravel())
        nrow += len(E) * nk
        kinds.append(np.full(len(E) * nk, U_DIRICHLET))
        edges_of_row.append(np.repeat(E, nk))

    # normal continuity of z on subdivision edges
    E = fine.edges_with_tag(FP)
    if len(E):
        w, psi, (p0, p1), _ = _edge_moment_rows(fine, geo, basis, E, True, k + 1)
        n = fine.edge_normal[E]
        m0 = np.einsum("eq,eqj,eqa->eja", w, psi, p0)
        m1 = np.einsum("eq,eqj,eqa->eja", w, psi, p1)
        r = nrow + np.arange(len(E) * nk).reshape(len(E), nk)
        for c in range(2):
            c0 = dofs.z_dofs(fine.edge_tris[E, 0], c)
            c1 = dofs.z_dofs(fine.edge_tris[E, 1], c)
            emit(
                np.broadcast_to(r[:, :, None], m0.shape),
                np.broadcast_to(c0[:, None, :], m0.shape),
                m0 * n[:, c, None, None],
            )
            emit(
                np.broadcast_to(r[:, :, None], m1.shape),
                np.broadcast_to(c1[:, None, :], m1.shape),
                -m1 * n[:, c, None, None],
            )
        nrow += len(E) * nk
        kinds.append(np.full(len(E) * nk, Z_NORMAL))
        edges_of_row.append(np.repeat(E, nk))
        rhs.append(np.zeros(len(E) * nk))

    # mortar matching: sum_i c_i(u, psi) over merged segments
    mr, mc, mv = mortar_coupling_entries(fine, geo, basis, layout, dofs)
    nm = dofs.n_lambda
    if nm:
        emit(nrow + (mr - dofs.n_z - dofs.n_u), mc, mv)
        nrow += nm
        kinds.append(np.full(nm, MORTAR))
        edges_of_row.append(np.repeat(dofs.lambda_edges, nk))
        rhs.append(np.zeros(nm))

    ncols = dofs.n_z + dofs.n_u
    if rows:
        A = sps.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nrow, ncols),
        ).tocsr()
    else:
        A = sps.csr_matrix((0, ncols))
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dtype=dt)
    return ConstraintSet(A, cat(rhs, float), cat(kinds, int), cat(edges_of_row, int))


def mortar_coupling_entries(fine, geo, basis, layout, dofs):
    """
    COO triplets (lambda dof, u dof, value) of sum_i c_i(v, mu) with
    mu running over the Legendre basis of each non-mortar edge.
    """
    k = basis.k
    nk = k + 1
    pos = dofs.lambda_index()
    rule = gauss_segment(k + 1)
    R, C, V = [], [], []
    ev = fine.edge_vertices
    for m in layout.interfaces:
        seg = m.segments
        f = m.interface
        s = seg.s0[:, None] + rule.points[None, :] * (seg.s1 - seg.s0)[:, None]
        w = rule.weights[None, :] * (seg.s1 - seg.s0)[:, None]
        x = f.start[None, None, :] + s[..., None] * f.tangent[None, None, :]
        psi = multiplier_basis(fine, seg.edge_a, x, nk)
        lam_pos = np.array([pos[int(e)] for e in seg.edge_a])
        ldofs = dofs.lambda_dofs(lam_pos)
        for side, edges in ((m.nonmortar, seg.edge_a), (m.mortar, seg.edge_b)):
            tris = fine.edge_tris[edges, 0]
            phi = basis.values(geo.to_reference(tris, x))
            ent = m.sign(side) * np.einsum("sq,sqj,sqa->sja", w, psi, phi)
            udofs = dofs.u_dofs(tris)
            R.append(np.broadcast_to(ldofs[:, :, None], ent.shape).ravel())
            C.append(np.broadcast_to(udofs[:, None, :], ent.shape).ravel())
            V.append(ent.ravel())
    if not R:
        z = np.zeros(0)
        return z.astype(int), z.astype(int), z
    return np.concatenate(R), np.concatenate(C), np.concatenate(V)


def multiplier_basis(fine, edges, x, nk):
    """Legendre basis of non-mortar ``edges`` evaluated at physical points x (n, nq, 2)."""
    v = fine.vertices[fine.edge_vertices[edges]]
    a, b = v[:, 0], v[:, 1]
    L = np.linalg.norm(b - a, axis=1)
    sl = np.einsum("sqi,si->sq", x - a[:, None, :], b - a) / (L**2)[:, None]
    return legendre_edge(nk, sl, 1.0) / np.sqrt(L)[:, None, None]
