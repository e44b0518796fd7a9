"""
Assembly of the mortar staggered DG saddle-point system and its solution.

Unknown ordering: raw z, raw u, lambda, then one multiplier per constraint
row (Z_NORMAL rows first, then the U_CONTINUITY / U_DIRICHLET rows).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import AssemblyError, SolverError
from .fine_mesh import FP, FU_BOUNDARY, FU_INTERIOR, INTERFACE, build_fine_mesh
from .mortar import FINER_SIDE, build_mortar_layout
from .quadrature import corner_graded_rule, gauss_segment, triangle_rule
from .spaces import (
    MORTAR,
    U_CONTINUITY,
    U_DIRICHLET,
    Z_NORMAL,
    ElementGeometry,
    SpaceConfig,
    build_constraints,
    build_dof_map,
    edge_points,
    lagrange_basis,
    mortar_coupling_entries,
    multiplier_basis,
)

logger = logging.getLogger(__name__)

# extra polynomial degrees granted to non-polynomial data
F_DEGREE_BUMP = 4
PIVOT_TOL = 1e-12
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class Discretization:
    """Everything fixed by one coarse mesh: fine mesh, mortar layout, spaces."""

    coarse: object
    fine: object
    layout: object
    cfg: SpaceConfig
    dofs: object
    geo: ElementGeometry
    basis: object

    @property
    def k(self):
        return self.cfg.k

    @property
    def partition(self):
        return self.coarse.partition


def discretize(coarse, k=1, mortar_rule=FINER_SIDE):
    cfg = SpaceConfig(k)
    fine = build_fine_mesh(coarse)
    layout = build_mortar_layout(fine, mortar_rule)
    dofs = build_dof_map(fine, layout, cfg)
    geo = ElementGeometry.from_mesh(fine)
    return Discretization(coarse, fine, layout, cfg, dofs, geo, lagrange_basis(k))


class _Triplets:
    def __init__(self, shape):
        self.shape = shape
        self.r, self.c, self.v = [], [], []

    def add(self, rows, cols, vals):
        rows, cols, vals = np.broadcast_arrays(rows, cols, vals)
        self.r.append(rows.ravel())
        self.c.append(cols.ravel())
        self.v.append(vals.ravel())

    def tocsr(self):
        if not self.r:
            return sps.csr_matrix(self.shape)
        return sps.coo_matrix(
            (np.concatenate(self.v), (np.concatenate(self.r), np.concatenate(self.c))),
            shape=self.shape,
        ).tocsr()


def volume_rule(k):
    return triangle_rule(2 * k)


def load_rule(k):
    return triangle_rule(max(2 * k, k + F_DEGREE_BUMP))


def _vol_data(disc, rule):
    phi = disc.basis.values(rule.points)
    dphi = disc.geo.physical_grads(np.arange(disc.fine.n_triangles), disc.basis.grads(rule.points))
    wdet = rule.weights[None, :] * np.abs(disc.geo.det)[:, None]
    return phi, dphi, wdet


def _edge_data(disc, edges, npts):
    fine = disc.fine
    rule = gauss_segment(npts)
    L = fine.edge_lengths()[edges]
    pts = edge_points(fine, edges, rule.points)
    w = rule.weights[None, :] * L[:, None]
    sides = []
    for s in (0, 1):
        tris = fine.edge_tris[edges, s]
        if np.all(tris >= 0):
            sides.append((tris, disc.basis.values(disc.geo.to_reference(tris, pts))))
    return w, pts, sides


def mass_block(disc):
    """rho^{-1} (z, q) on the raw z space."""
    dofs, d = disc.dofs, disc.basis.dim
    rule = volume_rule(disc.k)
    phi = disc.basis.values(rule.points)
    Mref = np.einsum("q,qa,qb->ab", rule.weights, phi, phi)
    scale = np.abs(disc.geo.det) / disc.fine.rho
    T = np.arange(disc.fine.n_triangles)
    acc = _Triplets((dofs.n_z, dofs.n_z))
    loc = scale[:, None, None] * Mref[None]
    for c in range(2):
        zd = dofs.z_dofs(T, c)
        acc.add(zd[:, :, None], zd[:, None, :], loc)
    return acc.tocsr()


AVG = (0.5, 0.5)
JUMP = (1.0, -1.0)


def _two_sided_term(acc, disc, edges, test_rows, trial_cols, wt_test, wt_trial, scale=1.0):
    """
    Accumulate scale * (wt_test(v), wt_trial(q.n))_e on two-sided edges, where
    each weight pair selects an average or a jump across the edge.
    """
    w, _, sides = _edge_data(disc, edges, disc.k + 1)
    n = disc.fine.edge_normal[edges]
    for s, (ts, ps) in enumerate(sides):
        for r, (tr, pr) in enumerate(sides):
            mm = np.einsum("eq,eqa,eqb->eab", w, ps, pr) * (scale * wt_test[s] * wt_trial[r])
            for c in range(2):
                acc.add(test_rows(ts)[:, :, None], trial_cols(tr, c)[:, None, :], mm * n[:, c, None, None])


def b_block(disc):
    """
    b(z, v) = (z, grad v) - sum_{F_p} ({z.n}, [v]); rows u-test, columns z.

    Two terms that vanish identically on Q_h x V_h are added, ({v}, [z.n])
    on F_p and ({z.n}, [v]) on F_u^0, so that the raw matrix is the exact
    transpose of the b* block plus the boundary trace block.
    """
    dofs, fine = disc.dofs, disc.fine
    T = np.arange(fine.n_triangles)
    phi, dphi, wdet = _vol_data(disc, volume_rule(disc.k))
    acc = _Triplets((dofs.n_u, dofs.n_z))
    ud = dofs.u_dofs(T) - dofs.n_z
    for c in range(2):
        ent = np.einsum("tq,tqa,qb->tab", wdet, dphi[..., c], phi)
        acc.add(ud[:, :, None], dofs.z_dofs(T, c)[:, None, :], ent)
    rows = lambda t: dofs.u_dofs(t) - dofs.n_z
    E = fine.edges_with_tag(FP)
    if len(E):
        _two_sided_term(acc, disc, E, rows, dofs.z_dofs, JUMP, AVG, -1.0)
        _two_sided_term(acc, disc, E, rows, dofs.z_dofs, AVG, JUMP, -1.0)
    E = fine.edges_with_tag(FU_INTERIOR)
    if len(E):
        _two_sided_term(acc, disc, E, rows, dofs.z_dofs, JUMP, AVG, -1.0)
    return acc.tocsr()


def b_star_block(disc):
    """
    b*(v, q) = -(v, div q) + sum_{F_u^0} ({v}, [q.n]) + (v, q.n_i)_{Gamma_i};
    rows z-test, columns u.
    """
    dofs, fine = disc.dofs, disc.fine
    T = np.arange(fine.n_triangles)
    phi, dphi, wdet = _vol_data(disc, volume_rule(disc.k))
    acc = _Triplets((dofs.n_z, dofs.n_u))
    ud = dofs.u_dofs(T) - dofs.n_z
    for c in range(2):
        ent = -np.einsum("tq,qa,tqb->tba", wdet, phi, dphi[..., c])
        acc.add(dofs.z_dofs(T, c)[:, :, None], ud[:, None, :], ent)
    E = fine.edges_with_tag(FU_INTERIOR)
    if len(E):
        # ({v}, [q.n]) built in (u, z) orientation and transposed
        tmp = _Triplets((dofs.n_u, dofs.n_z))
        _two_sided_term(tmp, disc, E, lambda t: dofs.u_dofs(t) - dofs.n_z, dofs.z_dofs, AVG, JUMP)
        fu = tmp.tocsr().T.tocoo()
        acc.add(fu.row, fu.col, fu.data)
    E = fine.edges_with_tag(INTERFACE)
    if len(E):
        part = disc.partition
        w, _, ((t0, p0),) = _edge_data(disc, E, disc.k + 1)
        sign = np.array(
            [part.interfaces[fi].sign(sd) for fi, sd in zip(fine.edge_interface[E], fine.subdomain[t0])]
        )
        n_out = fine.edge_normal[E] * sign[:, None]
        mm = np.einsum("eq,eqb,eqa->eba", w, p0, p0)
        for c in range(2):
            acc.add(
                dofs.z_dofs(t0, c)[:, :, None],
                (dofs.u_dofs(t0) - dofs.n_z)[:, None, :],
                mm * n_out[:, c, None, None],
            )
    return acc.tocsr()


def boundary_trace_block(disc):
    """(u, q.n)_{boundary of Omega}; carries the Dirichlet trace into the flux equation."""
    dofs, fine = disc.dofs, disc.fine
    acc = _Triplets((dofs.n_z, dofs.n_u))
    E = fine.edges_with_tag(FU_BOUNDARY)
    if len(E):
        w, _, ((t0, p0),) = _edge_data(disc, E, disc.k + 1)
        n = fine.edge_normal[E]
        mm = np.einsum("eq,eqb,eqa->eba", w, p0, p0)
        for c in range(2):
            acc.add(
                dofs.z_dofs(t0, c)[:, :, None],
                (dofs.u_dofs(t0) - dofs.n_z)[:, None, :],
                mm * n[:, c, None, None],
            )
    return acc.tocsr()


def singular_corners(fine, points, tol=1e-12):
    """{fine triangle: local vertex index} for triangles with a vertex at one of ``points``."""
    out = {}
    if not len(points):
        return out
    p = fine.points()
    for sp in np.atleast_2d(np.asarray(points, dtype=float)):
        d = np.linalg.norm(p - sp[None, None, :], axis=-1)
        for t, j in zip(*np.nonzero(d <= tol)):
            out[int(t)] = int(j)
    return out


def _load_entries(disc, f, tris, rule):
    x = disc.geo.to_physical(tris, rule.points)
    fv = np.broadcast_to(f(x[..., 0], x[..., 1]), x.shape[:2])
    phi = disc.basis.values(rule.points)
    wdet = rule.weights[None, :] * np.abs(disc.geo.det[tris])[:, None]
    return np.einsum("tq,tq,qa->ta", wdet, fv, phi)


def load_vector(disc, f, singular_points=()):
    """
    (f, v) for every raw u basis function. Triangles with a vertex at a
    singular point use a corner-graded rule, exact for f ~ r^-1.5 times
    polynomials.
    """
    T = np.arange(disc.fine.n_triangles)
    loc = _load_entries(disc, f, T, load_rule(disc.k))
    for t, j in singular_corners(disc.fine, singular_points).items():
        loc[t] = _load_entries(disc, f, np.array([t]), corner_graded_rule(load_rule(disc.k).degree, j))[0]
    F = np.zeros(disc.dofs.n_u)
    np.add.at(F, (disc.dofs.u_dofs(T) - disc.dofs.n_z).ravel(), loc.ravel())
    return F


@dataclass(frozen=True)
class SubdomainBlocks:
    M: sps.csr_matrix
    B: sps.csr_matrix
    B_star: sps.csr_matrix
    B_boundary: sps.csr_matrix
    F: np.ndarray


def assemble_subdomain_blocks(disc, f, singular_points=()):
    """Mass, b, b* (and the boundary trace term) and load over all subdomains."""
    return SubdomainBlocks(
        mass_block(disc), b_block(disc), b_star_block(disc), boundary_trace_block(disc),
        load_vector(disc, f, singular_points),
    )


def assemble_mortar_blocks(disc):
    """
    Coupling C with v^T C mu = sum_i c_i(v, mu) (rows u, columns lambda) and
    the matching rows, which are C^T.
    """
    dofs = disc.dofs
    r, c, v = mortar_coupling_entries(disc.fine, disc.geo, disc.basis, disc.layout, dofs)
    CT = sps.coo_matrix(
        (v, (r - dofs.n_z - dofs.n_u, c - dofs.n_z)), shape=(dofs.n_lambda, dofs.n_u)
    ).tocsr()
    return CT.T.tocsr(), CT


@dataclass
class SaddleSystem:
    matrix: sps.csr_matrix
    rhs: np.ndarray
    offsets: dict
    disc: Discretization
    constraints: object

    @property
    def shape(self):
        return self.matrix.shape


def build_global_system(disc, blocks, mortar, constraints):
    dofs = disc.dofs
    nz, nu, nl = dofs.n_z, dofs.n_u, dofs.n_lambda
    C, CT = mortar
    Cq_rows = constraints.rows_of(Z_NORMAL)
    Cu_rows = constraints.rows_of(U_CONTINUITY, U_DIRICHLET)
    Cm_rows = constraints.rows_of(MORTAR)
    A = constraints.matrix
    Cq = A[Cq_rows][:, :nz]
    Cu = A[Cu_rows][:, nz : nz + nu]
    if len(Cm_rows) != nl or (nl and abs(A[Cm_rows][:, nz : nz + nu] - CT).max() > 0):
        raise AssemblyError("mortar rows disagree with the coupling block")
    if blocks.M.shape != (nz, nz) or blocks.B.shape != (nu, nz) or C.shape != (nu, nl):
        raise AssemblyError("block shapes disagree with the dof map")
    G = blocks.B_star + blocks.B_boundary
    nq, nc = Cq.shape[0], Cu.shape[0]
    if nq and abs(A[Cq_rows][:, nz:]).max() > 0:
        raise AssemblyError("Z_NORMAL rows touch u dofs")
    grid = [
        [blocks.M, -G, None, Cq.T, None],
        [blocks.B, None, -C if nl else None, None, Cu.T],
        [None, CT if nl else None, None, None, None],
        [Cq, None, None, None, None],
        [None, Cu, None, None, None],
    ]
    sizes = [nz, nu, nl, nq, nc]
    keep = [i for i, s in enumerate(sizes) if s > 0]
    grid = [[grid[i][j] for j in keep] for i in keep]
    # bmat needs at least one block per row/column to infer shapes
    for a, i in enumerate(keep):
        for b, j in enumerate(keep):
            if grid[a][b] is None and a == b:
                grid[a][b] = sps.csr_matrix((sizes[i], sizes[j]))
    K = sps.bmat(grid, format="csr")
    rhs = np.concatenate([np.zeros(nz), blocks.F, np.zeros(nl), np.zeros(nq), constraints.rhs[Cu_rows]])
    off = np.concatenate([[0], np.cumsum(sizes)])
    offsets = dict(zip(["z", "u", "lambda", "z_constraints", "u_constraints", "end"], off))
    n = int(off[-1])
    if K.shape != (n, n) or n != dofs.n_total + len(Cq_rows) + len(Cu_rows):
        raise AssemblyError(f"system dimension {K.shape} does not match bookkeeping {n}")
    return SaddleSystem(K, rhs, offsets, disc, constraints)


def assemble(disc, f, g, singular_points=()):
    blocks = assemble_subdomain_blocks(disc, f, singular_points)
    mortar = assemble_mortar_blocks(disc)
    cons = build_constraints(disc.fine, disc.layout, disc.dofs, disc.cfg, g, disc.geo)
    return build_global_system(disc, blocks, mortar, cons)


def n_free_dofs(disc):
    """Dimension of Q_h x V_h x M_h: raw unknowns minus independent constraint rows."""
    fine, k = disc.fine, disc.k
    nk = k + 1
    n_rows = nk * (
        len(fine.edges_with_tag(FU_INTERIOR))
        + len(fine.edges_with_tag(FU_BOUNDARY))
        + len(fine.edges_with_tag(FP))
    )
    return disc.dofs.n_total - n_rows


@dataclass
class SolutionFields:
    """Coefficient arrays of z_h (nT, 2, d), u_h (nT, d) and lambda_h."""

    disc: Discretization
    z: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    multipliers: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_vector(cls, disc, x):
        dofs, d = disc.dofs, disc.basis.dim
        nT = disc.fine.n_triangles
        z = x[: dofs.n_z].reshape(nT, 2, d)
        u = x[dofs.n_z : dofs.n_z + dofs.n_u].reshape(nT, d)
        lam = x[dofs.n_z + dofs.n_u : dofs.n_total].copy()
        return cls(disc, z.copy(), u.copy(), lam, x[dofs.n_total :].copy())

    def vector(self):
        return np.concatenate([self.z.ravel(), self.u.ravel(), self.lam])

    def _ref(self, tris, pts):
        return self.disc.geo.to_reference(tris, pts)

    def u_at(self, tris, pts):
        """u_h at physical points (n, nq, 2) inside triangles ``tris``."""
        phi = self.disc.basis.values(self._ref(tris, pts))
        return np.einsum("tqa,ta->tq", phi, self.u[tris])

    def u_grad_at(self, tris, pts):
        g = self.disc.geo.physical_grads(tris, self.disc.basis.grads(self._ref(tris, pts)))
        return np.einsum("tqac,ta->tqc", g, self.u[tris])

    def z_at(self, tris, pts):
        phi = self.disc.basis.values(self._ref(tris, pts))
        return np.einsum("tqa,tca->tqc", phi, self.z[tris])

    def div_z_at(self, tris, pts):
        g = self.disc.geo.physical_grads(tris, self.disc.basis.grads(self._ref(tris, pts)))
        return np.einsum("tqac,tca->tq", g, self.z[tris])

    def lambda_at(self, edges, pts):
        """lambda_h at physical points (n, nq, 2) on non-mortar edges."""
        pos = self.disc.dofs.lambda_index()
        nk = self.disc.k + 1
        idx = np.array([pos[int(e)] for e in np.atleast_1d(edges)])
        coef = self.lam.reshape(-1, nk)[idx]
        psi = multiplier_basis(self.disc.fine, np.atleast_1d(edges), pts, nk)
        return np.einsum("sqj,sj->sq", psi, coef)

    def lambda_at_arclength(self, interface, s):
        """lambda_h at arclength positions along one interface."""
        m = self.disc.layout.interfaces[interface]
        s = np.atleast_1d(np.asarray(s, dtype=float))
        tr = m.nonmortar_trace
        k = np.clip(np.searchsorted(tr.breakpoints, s, side="right") - 1, 0, tr.n_segments - 1)
        x = m.interface.start[None, :] + s[:, None] * m.interface.tangent[None, :]
        return self.lambda_at(tr.edges[k], x[:, None, :])[:, 0]

    def u_point(self, tri, point):
        return float(self.u_at(np.array([tri]), np.asarray(point, dtype=float)[None, None, :])[0, 0])

    def z_point(self, tri, point):
        return self.z_at(np.array([tri]), np.asarray(point, dtype=float)[None, None, :])[0, 0]

    def u_l2_norm(self):
        rule = volume_rule(self.disc.k)
        phi = self.disc.basis.values(rule.points)
        vals = phi @ self.u.T
        return float(np.sqrt(np.sum(rule.weights[:, None] * np.abs(self.disc.geo.det)[None, :] * vals**2)))


def _equilibrate(A):
    A = A.tocsr()
    r = np.asarray(abs(A).max(axis=1).todense()).ravel()
    r[r == 0] = 1.0
    Dr = sps.diags(1.0 / r)
    A1 = (Dr @ A).tocsc()
    c = np.asarray(abs(A1).max(axis=0).todense()).ravel()
    c[c == 0] = 1.0
    Dc = sps.diags(1.0 / c)
    return (A1 @ Dc).tocsc(), 1.0 / r, 1.0 / c


def solve(system):
    """Direct sparse LU of the equilibrated saddle-point matrix."""
    A = system.matrix
    b = system.rhs
    As, dr, dc = _equilibrate(A)
    try:
        lu = spla.splu(As, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}", stage="factorization") from exc
    piv = np.abs(lu.U.diagonal())
    bad = np.flatnonzero(piv <= PIVOT_TOL * piv.max())
    if len(bad):
        raise SolverError(
            f"numerically singular system: pivot {int(bad[0])} of {len(piv)} "
            f"is {piv[bad[0]]:.3e} relative {piv[bad[0]] / piv.max():.3e}",
            stage=int(bad[0]),
        )
    y = lu.solve(dr * b)
    x = dc * y
    res = A @ x - b
    scale = np.linalg.norm(b) + abs(A).max() * np.linalg.norm(x)
    rel = np.linalg.norm(res) / scale if scale > 0 else 0.0
    if rel > RESIDUAL_TOL:
        # one step of iterative refinement
        x = x - dc * lu.solve(dr * res)
        res = A @ x - b
        rel = np.linalg.norm(res) / scale if scale > 0 else 0.0
    if rel > RESIDUAL_TOL:
        raise SolverError(f"relative residual {rel:.3e} exceeds {RESIDUAL_TOL}", stage="residual")
    logger.debug("solved system of size %d, relative residual %.2e", A.shape[0], rel)
    return SolutionFields.from_vector(system.disc, x)


def solve_problem(coarse, f, g, k=1, mortar_rule=FINER_SIDE, singular_points=()):
    disc = discretize(coarse, k, mortar_rule)
    system = assemble(disc, f, g, singular_points)
    return solve(system), system


def mortar_residual(sol):
    """sum_i c_i(u_h, psi) for every multiplier basis function psi."""
    _, CT = assemble_mortar_blocks(sol.disc)
    return CT @ sol.u.ravel()


def dump_matrix_market(system, path_matrix, path_rhs):
    scipy.io.mmwrite(str(path_matrix), system.matrix.tocoo())
    np.savetxt(str(path_rhs), system.rhs, fmt="%.17g")
