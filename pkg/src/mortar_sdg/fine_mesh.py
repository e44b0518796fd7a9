"""
Centroid subdivision of the coarse triangulation and edge classification.

Fine triangle ``3*t + j`` is the child of coarse triangle ``t`` spanned by
coarse vertices j, j+1 and the centroid, ordered (v_j, v_{j+1}, c). Its
local edge 0 is therefore the surviving coarse edge, local edges 1 and 2
are subdivision edges.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import GeometryError, PartitionError

UNSET, FU_BOUNDARY, FU_INTERIOR, FP, INTERFACE = -1, 0, 1, 2, 3
TAG_NAMES = {
    UNSET: "UNSET",
    FU_BOUNDARY: "FU_BOUNDARY",
    FU_INTERIOR: "FU_INTERIOR",
    FP: "FP",
    INTERFACE: "INTERFACE",
}


@dataclass(frozen=True)
class FineMesh:
    """
    Subdivided mesh over all subdomains.

    Edge arrays: ``edge_vertices`` (nE, 2) ordered so that the edge runs
    counterclockwise around ``edge_tris[:, 0]``; ``edge_tris`` (nE, 2) with
    -1 for a missing second neighbour; ``edge_local`` the local edge index
    in each neighbour; ``edge_normal`` the fixed unit normal, pointing from
    the first into the second neighbour (outward on the domain boundary,
    n_ij on interfaces); ``edge_interface`` the interface index or -1.
    """

    coarse: object
    vertices: np.ndarray
    triangles: np.ndarray
    parent: np.ndarray
    subdomain: np.ndarray
    edge_vertices: np.ndarray
    edge_tris: np.ndarray
    edge_local: np.ndarray
    edge_created: np.ndarray
    tri_edges: np.ndarray
    edge_tag: np.ndarray
    edge_normal: np.ndarray
    edge_interface: np.ndarray

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edge_vertices)

    def points(self):
        return self.vertices[self.triangles]

    def areas(self):
        p = self.points()
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def diameters(self):
        p = self.points()
        return np.max(
            np.stack([np.linalg.norm(p[:, (j + 1) % 3] - p[:, j], axis=1) for j in range(3)]),
            axis=0,
        )

    def edge_lengths(self):
        v = self.vertices[self.edge_vertices]
        return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)

    def edges_with_tag(self, tag):
        return np.flatnonzero(self.edge_tag == tag)

    def tag_counts(self):
        return {TAG_NAMES[t]: int(np.sum(self.edge_tag == t)) for t in TAG_NAMES if t != UNSET}

    @property
    def rho(self):
        """rho on every fine triangle."""
        return np.asarray(self.coarse.partition.rho)[self.subdomain]


def subdivide_centroid(coarse):
    """Split every coarse triangle into three by joining its centroid to the vertices."""
    pts_all, tris_all, par_all, sub_all = [], [], [], []
    vbase, tbase = 0, 0
    for piece in coarse.pieces:
        if np.any(piece.signed_areas() <= 0.0):
            raise GeometryError(f"degenerate or inverted triangle in subdomain {piece.subdomain}")
        nv, nt = len(piece.vertices), piece.n_triangles
        cen = piece.vertices[piece.triangles].mean(axis=1)
        pts_all.append(np.vstack([piece.vertices, cen]))
        T = piece.triangles + vbase
        c = vbase + nv + np.arange(nt)
        kids = np.empty((nt, 3, 3), dtype=int)
        for j in range(3):
            kids[:, j, 0] = T[:, j]
            kids[:, j, 1] = T[:, (j + 1) % 3]
            kids[:, j, 2] = c
        tris_all.append(kids.reshape(-1, 3))
        par_all.append(np.repeat(tbase + np.arange(nt), 3))
        sub_all.append(np.full(3 * nt, piece.subdomain, dtype=int))
        vbase += nv + nt
        tbase += nt
    vertices = np.vstack(pts_all)
    triangles = np.vstack(tris_all)
    parent = np.concatenate(par_all)
    subdomain = np.concatenate(sub_all)

    nT = len(triangles)
    local = np.stack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=1)
    keys = np.sort(local.reshape(-1, 2), axis=1)
    uniq, first, inv, counts = np.unique(
        keys, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    inv = inv.reshape(-1)
    if np.any(counts > 2):
        raise GeometryError("non-manifold edge in fine mesh")
    nE = len(uniq)
    edge_tris = -np.ones((nE, 2), dtype=int)
    edge_local = -np.ones((nE, 2), dtype=int)
    order = np.argsort(inv, kind="stable")
    slot_tri = order // 3
    slot_loc = order % 3
    e_sorted = inv[order]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    edge_tris[:, 0] = slot_tri[starts]
    edge_local[:, 0] = slot_loc[starts]
    two = counts == 2
    edge_tris[two, 1] = slot_tri[starts[two] + 1]
    edge_local[two, 1] = slot_loc[starts[two] + 1]
    assert np.all(e_sorted[starts] == np.arange(nE))
    t0, l0 = edge_tris[:, 0], edge_local[:, 0]
    edge_vertices = np.column_stack([triangles[t0, l0], triangles[t0, (l0 + 1) % 3]])
    tri_edges = inv.reshape(nT, 3)
    # local edge 0 of every child is a coarse edge, 1 and 2 are subdivision edges
    created = edge_local[:, 0] != 0
    v = vertices[edge_vertices]
    d = v[:, 1] - v[:, 0]
    L = np.linalg.norm(d, axis=1)
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / L[:, None]
    return FineMesh(
        coarse=coarse,
        vertices=vertices,
        triangles=triangles,
        parent=parent,
        subdomain=subdomain,
        edge_vertices=edge_vertices,
        edge_tris=edge_tris,
        edge_local=edge_local,
        edge_created=created,
        tri_edges=tri_edges,
        edge_tag=np.full(nE, UNSET, dtype=int),
        edge_normal=normal,
        edge_interface=-np.ones(nE, dtype=int),
    )


def classify_edges(fine, partition=None):
    """
    Tag every fine edge as FU_BOUNDARY, FU_INTERIOR, FP or INTERFACE and
    fix its normal. Idempotent.
    """
    partition = partition if partition is not None else fine.coarse.partition
    nE = fine.n_edges
    tag = np.full(nE, UNSET, dtype=int)
    iface = -np.ones(nE, dtype=int)
    normal = fine.edge_normal.copy()
    single = fine.edge_tris[:, 1] < 0
    tag[fine.edge_created] = FP
    if np.any(fine.edge_created & single):
        raise GeometryError("subdivision edge with a single neighbour")
    tag[~fine.edge_created & ~single] = FU_INTERIOR
    v = fine.vertices[fine.edge_vertices]
    bnd = partition.on_boundary(v[:, 0]) & partition.on_boundary(v[:, 1])
    # both endpoints on the outer boundary does not imply the edge is on it
    mid = 0.5 * (v[:, 0] + v[:, 1])
    bnd &= partition.on_boundary(mid)
    for e in np.flatnonzero(single):
        if bnd[e]:
            tag[e] = FU_BOUNDARY
            # outward normal of the only neighbour already
            continue
        sub = fine.subdomain[fine.edge_tris[e, 0]]
        k = partition.interface_of_segment(sub, v[e, 0], v[e, 1])
        if k is None:
            raise PartitionError(
                f"edge {e} of subdomain {sub} lies on the subdomain boundary "
                "but on no known interface"
            )
        f = partition.interfaces[k]
        tag[e] = INTERFACE
        iface[e] = k
        normal[e] = f.normal
        # sanity: outward normal of this side must be +-n_ij
        if abs(abs(fine.edge_normal[e] @ f.normal) - 1.0) > 1e-10:
            raise GeometryError(f"interface edge {e} is not parallel to interface {k}")
    return replace(fine, edge_tag=tag, edge_normal=normal, edge_interface=iface)


def build_fine_mesh(coarse):
    return classify_edges(subdivide_centroid(coarse), coarse.partition)
