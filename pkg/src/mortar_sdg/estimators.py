"""
Residual a posteriori estimators for the potential (eta_1) and energy
(eta_2) errors, their aggregation to coarse indicators, and exact errors.

Term order in every breakdown: volume residual, flux/gradient mismatch,
F_u^0 normal-flux jump, interface flux mismatch, u-jump over F_p and the
non-mortar interface mesh.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .assembly import load_rule
from .errors import MeshConsistencyError
from .fine_mesh import FP, FU_INTERIOR
from .quadrature import gauss_segment, subdivided_triangle_rule, triangle_rule
from .spaces import edge_points

TERM_NAMES = ("volume", "flux_gradient", "fu_jump", "interface_flux", "u_jump")
CHILDREN = "children"
OVERLAP = "overlap"
AGGREGATE_RULES = (CHILDREN, OVERLAP)


@dataclass(frozen=True)
class LocalEstimatorField:
    """Per fine triangle: the five squared terms of eta_tau and of etabar_tau."""

    eta_terms: np.ndarray
    etabar_terms: np.ndarray
    h: np.ndarray
    subdomain: np.ndarray
    parent: np.ndarray

    @property
    def eta_sq(self):
        return self.eta_terms.sum(axis=1)

    @property
    def etabar_sq(self):
        return self.etabar_terms.sum(axis=1)

    def values(self, which):
        if which in ("eta1", "eta"):
            return self.eta_sq
        if which in ("eta2", "etabar"):
            return self.etabar_sq
        raise ValueError(f"unknown estimator {which!r}")

    def __len__(self):
        return len(self.h)


@dataclass(frozen=True)
class CoarseIndicatorField:
    xi_sq: np.ndarray
    level: int
    which: str
    rule: str = CHILDREN


def _edge_quad(fine, edges, npts):
    rule = gauss_segment(npts)
    L = fine.edge_lengths()[edges]
    return rule.weights[None, :] * L[:, None], edge_points(fine, edges, rule.points), L


def compute_local_estimators(solution, f, rho=None):
    """
    Evaluate eta_tau^2 and etabar_tau^2 on every fine triangle.

    ``rho`` optionally overrides the per-subdomain coefficient used in the
    estimator weights (the discrete fields are taken as given).
    """
    disc = solution.disc
    fine, k = disc.fine, disc.k
    nT = fine.n_triangles
    rho_sub = np.asarray(disc.partition.rho if rho is None else rho, dtype=float)
    rt = rho_sub[fine.subdomain]
    h = fine.diameters()
    T = np.arange(nT)
    eta = np.zeros((nT, 5))
    bar = np.zeros((nT, 5))

    # volume residual
    rule = load_rule(k)
    x = disc.geo.to_physical(T, rule.points)
    wdet = rule.weights[None, :] * np.abs(disc.geo.det)[:, None]
    res = np.broadcast_to(f(x[..., 0], x[..., 1]), x.shape[:2]) + solution.div_z_at(T, x)
    r2 = np.sum(wdet * res**2, axis=1)
    eta[:, 0] = h**4 * r2
    bar[:, 0] = h**2 * r2 / rt

    # flux / gradient mismatch
    rule = triangle_rule(2 * k)
    x = disc.geo.to_physical(T, rule.points)
    wdet = rule.weights[None, :] * np.abs(disc.geo.det)[:, None]
    mis = solution.z_at(T, x) / rt[:, None, None] - solution.u_grad_at(T, x)
    m2 = np.sum(wdet * np.sum(mis**2, axis=-1), axis=1)
    eta[:, 1] = h**2 * m2
    bar[:, 1] = rt * m2

    npts = k + 1
    # normal flux jump on interior coarse edges, shared by both neighbours
    E = fine.edges_with_tag(FU_INTERIOR)
    if len(E):
        w, pts, L = _edge_quad(fine, E, npts)
        t0, t1 = fine.edge_tris[E, 0], fine.edge_tris[E, 1]
        jz = np.einsum("eqc,ec->eq", solution.z_at(t0, pts) - solution.z_at(t1, pts), fine.edge_normal[E])
        j2 = np.sum(w * jz**2, axis=1)
        for t in (t0, t1):
            np.add.at(eta[:, 2], t, L**3 * j2)
            np.add.at(bar[:, 2], t, L * j2 / rt[t])

    # u jump on subdivision edges
    E = fine.edges_with_tag(FP)
    if len(E):
        w, pts, L = _edge_quad(fine, E, npts)
        t0, t1 = fine.edge_tris[E, 0], fine.edge_tris[E, 1]
        ju = solution.u_at(t0, pts) - solution.u_at(t1, pts)
        j2 = np.sum(w * ju**2, axis=1)
        for t in (t0, t1):
            np.add.at(eta[:, 4], t, L * j2)
            np.add.at(bar[:, 4], t, rt[t] * j2 / L)

    # interface terms on merged segments
    rule = gauss_segment(npts)
    Lall = fine.edge_lengths()
    lam_pos = disc.dofs.lambda_index()
    for m in disc.layout.interfaces:
        seg = m.segments
        missing = [int(e) for e in seg.edge_a if int(e) not in lam_pos]
        if missing:
            raise MeshConsistencyError(f"no multiplier on non-mortar edge {missing[0]}")
        f_ = m.interface
        s = seg.s0[:, None] + rule.points[None, :] * (seg.s1 - seg.s0)[:, None]
        w = rule.weights[None, :] * (seg.s1 - seg.s0)[:, None]
        x = f_.start[None, None, :] + s[..., None] * f_.tangent[None, None, :]
        lam = solution.lambda_at(seg.edge_a, x)
        ta = fine.edge_tris[seg.edge_a, 0]
        tb = fine.edge_tris[seg.edge_b, 0]
        n = f_.normal
        for t, e in ((ta, seg.edge_a), (tb, seg.edge_b)):
            # lambda n_i.n_ij - z.n_i = sign * (lambda - z.n_ij), sign = +-1
            dm = lam - solution.z_at(t, x) @ n
            d2 = np.sum(w * dm**2, axis=1)
            np.add.at(eta[:, 3], t, Lall[e] ** 3 * d2)
            np.add.at(bar[:, 3], t, Lall[e] * d2 / rt[t])
        ju = solution.u_at(ta, x) - solution.u_at(tb, x)
        j2 = np.sum(w * ju**2, axis=1)
        La = Lall[seg.edge_a]
        np.add.at(eta[:, 4], ta, La * j2)
        np.add.at(bar[:, 4], ta, rt[ta] * j2 / La)

    return LocalEstimatorField(eta, bar, h, fine.subdomain.copy(), fine.parent.copy())


def _touching_pairs(coarse_pts, fine_pts, tol=1e-12):
    """Pairs (coarse rho, fine tau) of closed triangles with non-empty intersection."""
    cc = coarse_pts.mean(axis=1)
    fc = fine_pts.mean(axis=1)
    rc = np.max(np.linalg.norm(coarse_pts - cc[:, None], axis=-1), axis=1)
    rf = np.max(np.linalg.norm(fine_pts - fc[:, None], axis=-1), axis=1)
    tree = cKDTree(fc)
    cand = tree.query_ball_point(cc, rc + rf.max() + tol)
    out = []
    for i, js in enumerate(cand):
        js = np.asarray(js, dtype=int)
        if len(js) == 0:
            continue
        js = js[np.linalg.norm(fc[js] - cc[i], axis=1) <= rc[i] + rf[js] + tol]
        keep = np.ones(len(js), dtype=bool)
        A = coarse_pts[i]
        for P, Q in ((A[None], fine_pts[js]), (fine_pts[js], A[None])):
            # separating axis test over the edge normals of P
            for a in range(3):
                d = P[:, (a + 1) % 3] - P[:, a]
                nrm = np.stack([d[:, 1], -d[:, 0]], axis=-1)
                nrm /= np.linalg.norm(nrm, axis=-1, keepdims=True)
                pp = np.einsum("tvc,tc->tv", np.broadcast_to(P, (len(js), 3, 2)), np.broadcast_to(nrm, (len(js), 2)))
                qq = np.einsum("tvc,tc->tv", np.broadcast_to(Q, (len(js), 3, 2)), np.broadcast_to(nrm, (len(js), 2)))
                scale = tol * (1.0 + np.abs(pp).max(axis=1))
                sep = (qq.min(axis=1) > pp.max(axis=1) + scale) | (qq.max(axis=1) < pp.min(axis=1) - scale)
                keep &= ~sep
        out.append(np.column_stack([np.full(keep.sum(), i), js[keep]]))
    return np.vstack(out) if out else np.zeros((0, 2), dtype=int)


def aggregate_indicators(local, which, coarse, rule=CHILDREN, fine=None):
    """
    Coarse indicators xi_rho^2.

    CHILDREN sums the squared local estimator over the three children of
    rho; OVERLAP sums over every fine triangle whose closure meets rho
    (``fine`` must then be given).
    """
    vals = local.values(which)
    xi = np.zeros(coarse.n_triangles)
    if rule == CHILDREN:
        np.add.at(xi, local.parent, vals)
    elif rule == OVERLAP:
        if fine is None:
            raise ValueError("the overlap rule needs the fine mesh")
        pairs = _touching_pairs(coarse.triangle_points(), fine.points())
        np.add.at(xi, pairs[:, 0], vals[pairs[:, 1]])
    else:
        raise ValueError(f"unknown aggregation rule {rule!r}")
    return CoarseIndicatorField(xi, coarse.level, which, rule)


def global_estimates(local):
    """(eta1, eta2) summed in element order."""
    return float(np.sqrt(np.sum(local.eta_sq))), float(np.sqrt(np.sum(local.etabar_sq)))


def _singular_rules(disc, singular_points, degree, levels, tol=1e-12):
    """{fine triangle: rule} for triangles whose closure contains a singular point."""
    out = {}
    for sp in singular_points:
        d = np.asarray(sp, dtype=float)[None, :] - disc.geo.origin
        lam = np.einsum("tij,tj->ti", disc.geo.inv_jac, d)
        bary = np.column_stack([1.0 - lam.sum(axis=1), lam])
        for t in np.flatnonzero(bary.min(axis=1) >= -tol):
            j = int(np.argmax(bary[t]))
            if bary[t, j] >= 1.0 - tol:
                out[int(t)] = subdivided_triangle_rule(degree, levels, j, graded_tip=True)
            else:
                out[int(t)] = subdivided_triangle_rule(degree, levels)
    return out


def compute_exact_errors(solution, u, grad_u, rho=None, singular_points=(), degree=10, levels=3):
    """
    (||u - u_h||_0, ||rho^{1/2} grad(u - u_h)||_0) elementwise with a degree
    ``degree`` rule, subdivided ``levels`` times on elements touching a
    singular point.
    """
    disc = solution.disc
    fine = disc.fine
    rho_sub = np.asarray(disc.partition.rho if rho is None else rho, dtype=float)
    rt = rho_sub[fine.subdomain]
    nT = fine.n_triangles
    base = triangle_rule(degree)
    special = _singular_rules(disc, singular_points, degree, levels)
    regular = np.setdiff1d(np.arange(nT), np.fromiter(special, dtype=int, count=len(special)))
    e0 = np.zeros(nT)
    e1 = np.zeros(nT)

    def accumulate(tris, rule):
        x = disc.geo.to_physical(tris, rule.points)
        wdet = rule.weights[None, :] * np.abs(disc.geo.det[tris])[:, None]
        du = np.broadcast_to(u(x[..., 0], x[..., 1]), x.shape[:2]) - solution.u_at(tris, x)
        g = grad_u(x[..., 0], x[..., 1])
        g = np.stack([np.broadcast_to(g[0], x.shape[:2]), np.broadcast_to(g[1], x.shape[:2])], axis=-1)
        dg = g - solution.u_grad_at(tris, x)
        e0[tris] = np.sum(wdet * du**2, axis=1)
        e1[tris] = rt[tris] * np.sum(wdet * np.sum(dg**2, axis=-1), axis=1)

    if len(regular):
        accumulate(regular, base)
    for t, r in special.items():
        accumulate(np.array([t]), r)
    return float(np.sqrt(e0.sum())), float(np.sqrt(e1.sum()))


@dataclass(frozen=True)
class ErrorReport:
    level: int
    n_coarse: int
    n_fine: int
    n_dof: int
    err_l2: float
    err_energy: float
    eta1: float
    eta2: float

    @property
    def eff1(self):
        return self.eta1 / self.err_l2 if self.err_l2 > 0 else float("nan")

    @property
    def eff2(self):
        return self.eta2 / self.err_energy if self.err_energy > 0 else float("nan")


def write_breakdown_csv(local, path):
    """Columns: element id, subdomain, h_tau, five eta terms, five etabar terms, totals."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["element", "subdomain", "h_tau"]
            + [f"eta_{n}" for n in TERM_NAMES]
            + [f"etabar_{n}" for n in TERM_NAMES]
            + ["eta_sq", "etabar_sq"]
        )
        for t in range(len(local)):
            w.writerow(
                [t, int(local.subdomain[t]), format(local.h[t], ".12g")]
                + [format(v, ".12g") for v in local.eta_terms[t]]
                + [format(v, ".12g") for v in local.etabar_terms[t]]
                + [format(local.eta_sq[t], ".12g"), format(local.etabar_sq[t], ".12g")]
            )
