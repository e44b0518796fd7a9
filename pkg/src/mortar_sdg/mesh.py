"""
Subdomain partitions and the per-subdomain coarse triangulations.

Every subdomain carries its own vertex table; meshes of neighbouring
subdomains need not match along their common interface. Refinement is
red-green and strictly local to a subdomain.
"""

from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, PartitionError

NONE, RED, GREEN = 0, 1, 2

_TOL = 1e-12


@dataclass(frozen=True)
class Rectangle:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise PartitionError(f"degenerate rectangle {self}")

    @property
    def area(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def sides(self):
        """The four sides as (start, end) pairs, counterclockwise from the bottom."""
        a = (self.x0, self.y0)
        b = (self.x1, self.y0)
        c = (self.x1, self.y1)
        d = (self.x0, self.y1)
        return [(a, b), (b, c), (c, d), (d, a)]


@dataclass(frozen=True)
class Interface:
    """Common edge of subdomains ``i < j``; ``normal`` points from i into j."""

    index: int
    i: int
    j: int
    start: np.ndarray
    end: np.ndarray
    normal: np.ndarray

    @property
    def length(self):
        return float(np.linalg.norm(self.end - self.start))

    @property
    def tangent(self):
        return (self.end - self.start) / self.length

    def arclength(self, pts):
        return (np.asarray(pts) - self.start) @ self.tangent

    def sign(self, side):
        """n_side . n_ij for one of the two adjacent subdomains."""
        if side == self.i:
            return 1.0
        if side == self.j:
            return -1.0
        raise ValueError(f"subdomain {side} is not adjacent to interface {self.index}")


@dataclass(frozen=True)
class SubdomainPartition:
    """Axis-aligned rectangles tiling a rectangular domain, with rho per piece."""

    rectangles: tuple
    rho: tuple
    interfaces: tuple = field(init=False)
    bbox: Rectangle = field(init=False)

    def __post_init__(self):
        rects = tuple(self.rectangles)
        rho = tuple(float(r) for r in self.rho)
        object.__setattr__(self, "rectangles", rects)
        object.__setattr__(self, "rho", rho)
        if len(rects) == 0:
            raise PartitionError("partition has no subdomains")
        if len(rho) != len(rects):
            raise PartitionError("need one rho value per subdomain")
        if any(r <= 0 for r in rho):
            raise PartitionError("rho must be positive on every subdomain")
        bbox = Rectangle(
            min(r.x0 for r in rects),
            min(r.y0 for r in rects),
            max(r.x1 for r in rects),
            max(r.y1 for r in rects),
        )
        scale = max(bbox.x1 - bbox.x0, bbox.y1 - bbox.y0)
        tol = _TOL * scale
        for a in range(len(rects)):
            for b in range(a + 1, len(rects)):
                ra, rb = rects[a], rects[b]
                ox = min(ra.x1, rb.x1) - max(ra.x0, rb.x0)
                oy = min(ra.y1, rb.y1) - max(ra.y0, rb.y0)
                if ox > tol and oy > tol:
                    raise PartitionError(f"subdomains {a} and {b} overlap")
        if abs(sum(r.area for r in rects) - bbox.area) > _TOL * bbox.area:
            raise PartitionError("subdomains do not cover the bounding rectangle")
        object.__setattr__(self, "bbox", bbox)
        object.__setattr__(self, "interfaces", tuple(self._find_interfaces(tol)))

    def _find_interfaces(self, tol):
        rects = self.rectangles
        found = []
        for a in range(len(rects)):
            for b in range(a + 1, len(rects)):
                ra, rb = rects[a], rects[b]
                seg = None
                # vertical contact
                for xa, xb, n in ((ra.x1, rb.x0, (1.0, 0.0)), (ra.x0, rb.x1, (-1.0, 0.0))):
                    if abs(xa - xb) <= tol:
                        lo, hi = max(ra.y0, rb.y0), min(ra.y1, rb.y1)
                        if hi - lo > tol:
                            if not (
                                abs(ra.y0 - rb.y0) <= tol and abs(ra.y1 - rb.y1) <= tol
                            ):
                                raise PartitionError(
                                    f"subdomains {a} and {b} are not geometrically conforming"
                                )
                            seg = ((xa, lo), (xa, hi), n)
                for ya, yb, n in ((ra.y1, rb.y0, (0.0, 1.0)), (ra.y0, rb.y1, (0.0, -1.0))):
                    if abs(ya - yb) <= tol:
                        lo, hi = max(ra.x0, rb.x0), min(ra.x1, rb.x1)
                        if hi - lo > tol:
                            if not (
                                abs(ra.x0 - rb.x0) <= tol and abs(ra.x1 - rb.x1) <= tol
                            ):
                                raise PartitionError(
                                    f"subdomains {a} and {b} are not geometrically conforming"
                                )
                            seg = ((lo, ya), (hi, ya), n)
                if seg is not None:
                    found.append(
                        Interface(
                            len(found),
                            a,
                            b,
                            np.array(seg[0], dtype=float),
                            np.array(seg[1], dtype=float),
                            np.array(seg[2], dtype=float),
                        )
                    )
        return found

    @property
    def n_subdomains(self):
        return len(self.rectangles)

    @property
    def adjacency(self):
        return {(f.i, f.j) for f in self.interfaces}

    def on_boundary(self, pts, tol=1e-12):
        """True where points lie on the outer boundary of the domain."""
        pts = np.atleast_2d(pts)
        b = self.bbox
        s = tol * max(b.x1 - b.x0, b.y1 - b.y0)
        return (
            (np.abs(pts[:, 0] - b.x0) <= s)
            | (np.abs(pts[:, 0] - b.x1) <= s)
            | (np.abs(pts[:, 1] - b.y0) <= s)
            | (np.abs(pts[:, 1] - b.y1) <= s)
        )

    def interface_of_segment(self, sub, a, b, tol=1e-12):
        """Index of the interface of subdomain ``sub`` containing segment ab, or None."""
        s = tol * max(self.bbox.x1 - self.bbox.x0, self.bbox.y1 - self.bbox.y0)
        for f in self.interfaces:
            if sub not in (f.i, f.j):
                continue
            t = f.tangent
            if all(
                abs(t[0] * (p - f.start)[1] - t[1] * (p - f.start)[0]) <= s and -s <= (p - f.start) @ t <= f.length + s
                for p in (a, b)
            ):
                return f.index
        return None


def uniform_partition(x0, y0, x1, y1, nx, ny, rho=1.0):
    """Split a rectangle into an nx-by-ny array of equal subdomains (row-major)."""
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    rects = [
        Rectangle(xs[i], ys[j], xs[i + 1], ys[j + 1]) for j in range(ny) for i in range(nx)
    ]
    if np.isscalar(rho):
        rho = [rho] * len(rects)
    return SubdomainPartition(tuple(rects), tuple(rho))


@dataclass(frozen=True)
class SubdomainMesh:
    """
    Triangulation of one subdomain.

    ``state`` tags how a triangle was created (NONE, RED or GREEN);
    ``green_parent`` holds the vertex triple of the triangle a green child
    was bisected from (-1 otherwise); ``parent`` is the index of the
    containing triangle on the previous level (-1 on level 0).
    """

    subdomain: int
    vertices: np.ndarray
    triangles: np.ndarray
    state: np.ndarray
    green_parent: np.ndarray
    parent: np.ndarray

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges(self):
        """Unique edges (sorted vertex pairs) and the (n_tri, 3) triangle-to-edge map."""
        t = self.triangles
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1)
        keys = np.sort(local.reshape(-1, 2), axis=1)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        return uniq, inv.reshape(-1, 3)


@dataclass(frozen=True)
class CoarseMesh:
    """Collection of subdomain triangulations on one refinement level."""

    partition: SubdomainPartition
    pieces: tuple
    level: int = 0

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum([p.n_triangles for p in self.pieces])])

    @property
    def n_triangles(self):
        return int(self.offsets[-1])

    def triangle_points(self):
        """(n, 3, 2) vertex coordinates of all coarse triangles in global order."""
        return np.concatenate([p.vertices[p.triangles] for p in self.pieces])

    def subdomain_of(self):
        return np.concatenate(
            [np.full(p.n_triangles, p.subdomain, dtype=int) for p in self.pieces]
        )

    def areas(self):
        return np.concatenate([p.signed_areas() for p in self.pieces])

    def parents(self):
        """Global ids of the containing triangles on the previous level."""
        out = []
        for p in self.pieces:
            out.append(p.parent)
        return np.concatenate(out)

    def locate(self, gid):
        """(piece index, local index) for a global triangle id."""
        off = self.offsets
        if not 0 <= gid < off[-1]:
            raise ValueError(f"unknown coarse triangle id {gid}")
        s = int(np.searchsorted(off, gid, side="right") - 1)
        return s, int(gid - off[s])


def triangle_angles(pts):
    """Interior angles in degrees of (n, 3, 2) triangles."""
    angs = []
    for j in range(3):
        a = pts[:, (j + 1) % 3] - pts[:, j]
        b = pts[:, (j + 2) % 3] - pts[:, j]
        c = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        angs.append(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
    return np.stack(angs, axis=1)


def min_angle(mesh):
    return float(triangle_angles(mesh.triangle_points()).min())


def build_initial_mesh(partition, grid=2, diagonal="sw-ne"):
    """
    Mesh every subdomain by a grid-by-grid array of cells, each cut into two
    triangles along ``diagonal`` ("sw-ne" or "se-nw").

    ``grid`` is an int or one int per subdomain.
    """
    n = partition.n_subdomains
    grids = [grid] * n if np.isscalar(grid) else list(grid)
    if len(grids) != n:
        raise ValueError("need one grid value per subdomain")
    if diagonal not in ("sw-ne", "se-nw"):
        raise ValueError(f"unknown diagonal rule {diagonal!r}")
    pieces = []
    for s, (rect, g) in enumerate(zip(partition.rectangles, grids)):
        g = int(g)
        if g < 1:
            raise ValueError("grid must be >= 1 cell per side")
        xs = np.linspace(rect.x0, rect.x1, g + 1)
        ys = np.linspace(rect.y0, rect.y1, g + 1)
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        verts = np.column_stack([X.ravel(), Y.ravel()])

        def vid(i, j):
            return j * (g + 1) + i

        tris = []
        for j in range(g):
            for i in range(g):
                a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
                if diagonal == "sw-ne":
                    tris += [(a, b, c), (a, c, d)]
                else:
                    tris += [(a, b, d), (b, c, d)]
        tris = np.array(tris, dtype=int)
        m = len(tris)
        pieces.append(
            SubdomainMesh(
                s,
                verts,
                tris,
                np.zeros(m, dtype=np.int8),
                -np.ones((m, 3), dtype=int),
                -np.ones(m, dtype=int),
            )
        )
    mesh = CoarseMesh(partition, tuple(pieces), 0)
    if np.any(mesh.areas() <= 0):
        raise GeometryError("initial mesh has non-positive triangle areas")
    return mesh


def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


def _refine_piece(piece, marked):
    verts = [tuple(v) for v in piece.vertices]
    # working triangle list: vertex triple, state, green parent, origin index
    tri = [tuple(int(v) for v in t) for t in piece.triangles]
    state = [int(s) for s in piece.state]
    gpar = [tuple(int(v) for v in g) for g in piece.green_parent]
    origin = list(range(len(tri)))
    alive = [True] * len(tri)

    midpoint = {}
    families = defaultdict(list)
    for t, g in enumerate(gpar):
        if state[t] == GREEN:
            families[g].append(t)
    for g, kids in families.items():
        m = (set(tri[kids[0]]) | set(tri[kids[1]])) - set(g)
        if len(kids) != 2 or len(m) != 1:
            raise GeometryError("corrupt green family")
        (m,) = m
        for e in ((g[0], g[1]), (g[1], g[2]), (g[2], g[0])):
            if m not in e and np.allclose(
                np.add(verts[e[0]], verts[e[1]]) / 2.0, verts[m], rtol=0, atol=1e-14
            ):
                midpoint[_edge_key(*e)] = m

    edge_tris = defaultdict(set)

    def tri_edges(t):
        a, b, c = tri[t]
        return (_edge_key(a, b), _edge_key(b, c), _edge_key(c, a))

    for t in range(len(tri)):
        for e in tri_edges(t):
            edge_tris[e].add(t)

    bisect = set()
    red = set()
    queue = deque()

    def mid(e):
        if e not in midpoint:
            a, b = e
            verts.append(((verts[a][0] + verts[b][0]) / 2.0, (verts[a][1] + verts[b][1]) / 2.0))
            midpoint[e] = len(verts) - 1
        return midpoint[e]

    def add_bisect(e):
        if e not in bisect:
            bisect.add(e)
            queue.extend(edge_tris.get(e, ()))

    def make_red(t):
        red.add(t)
        for e in tri_edges(t):
            add_bisect(e)

    def add_triangle(v, st, gp, org):
        tri.append(v)
        state.append(st)
        gpar.append(gp)
        origin.append(org)
        alive.append(True)
        t = len(tri) - 1
        for e in tri_edges(t):
            edge_tris[e].add(t)
        queue.append(t)
        return t

    def kill(t):
        alive[t] = False
        for e in tri_edges(t):
            edge_tris[e].discard(t)

    def ungreen(t):
        g = gpar[t]
        kids = [k for k in families.pop(g) if alive[k]]
        for k in kids:
            kill(k)
        a, b, c = g
        mab, mbc, mca = mid(_edge_key(a, b)), mid(_edge_key(b, c)), mid(_edge_key(c, a))
        for v in ((a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)):
            cen = np.mean([verts[x] for x in v], axis=0)
            org = min(kids, key=lambda k: _dist_to_triangle(cen, [verts[x] for x in tri[k]]))
            add_triangle(v, RED, (-1, -1, -1), origin[org])
        for e in ((a, b), (b, c), (c, a)):
            add_bisect(_edge_key(*e))

    for t in sorted(marked):
        if not alive[t]:
            continue
        if state[t] == GREEN:
            ungreen(t)
        else:
            make_red(t)

    while queue:
        t = queue.popleft()
        if not alive[t] or t in red:
            continue
        cnt = sum(e in bisect for e in tri_edges(t))
        if cnt == 0:
            continue
        if state[t] == GREEN:
            ungreen(t)
        elif cnt >= 2:
            make_red(t)

    out_tri, out_state, out_gp, out_par = [], [], [], []
    for t in range(len(tri)):
        if not alive[t]:
            continue
        a, b, c = tri[t]
        if t in red:
            mab, mbc, mca = mid(_edge_key(a, b)), mid(_edge_key(b, c)), mid(_edge_key(c, a))
            for v in ((a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)):
                out_tri.append(v)
                out_state.append(RED)
                out_gp.append((-1, -1, -1))
                out_par.append(origin[t])
            continue
        hit = [e for e in range(3) if _edge_key(tri[t][e], tri[t][(e + 1) % 3]) in bisect]
        if len(hit) == 1:
            j = hit[0]
            p = tri[t]
            a, b, c = p[j], p[(j + 1) % 3], p[(j + 2) % 3]
            m = mid(_edge_key(a, b))
            for v in ((a, m, c), (m, b, c)):
                out_tri.append(v)
                out_state.append(GREEN)
                out_gp.append(tuple(p))
                out_par.append(origin[t])
        else:
            out_tri.append(tri[t])
            out_state.append(state[t])
            out_gp.append(gpar[t])
            out_par.append(origin[t])
    return SubdomainMesh(
        piece.subdomain,
        np.array(verts, dtype=float),
        np.array(out_tri, dtype=int),
        np.array(out_state, dtype=np.int8),
        np.array(out_gp, dtype=int).reshape(-1, 3),
        np.array(out_par, dtype=int),
    )


def _dist_to_triangle(p, tri):
    a, b, c = (np.asarray(x) for x in tri)
    T = np.column_stack([b - a, c - a])
    lam = np.linalg.solve(T, np.asarray(p) - a)
    bary = np.array([1 - lam.sum(), lam[0], lam[1]])
    return -bary.min()


def refine_red_green(mesh, marked):
    """
    Red-refine the marked coarse triangles (global ids) and close the mesh
    with green bisections inside each subdomain.

    A green triangle that must be refined is first replaced, together with
    its sibling, by the red refinement of its parent. No closure is done
    across subdomain interfaces.
    """
    marked = {int(m) for m in marked}
    per_piece = defaultdict(set)
    for gid in marked:
        s, loc = mesh.locate(gid)
        per_piece[s].add(loc)
    if not marked:
        return mesh
    pieces = []
    for s, piece in enumerate(mesh.pieces):
        pieces.append(_refine_piece(piece, per_piece.get(s, set())))
    # parent indices are shifted to global ids of the previous level
    off = mesh.offsets
    pieces = [
        SubdomainMesh(
            p.subdomain, p.vertices, p.triangles, p.state, p.green_parent,
            np.where(p.parent >= 0, p.parent + off[s], -1),
        )
        for s, p in enumerate(pieces)
    ]
    return CoarseMesh(mesh.partition, tuple(pieces), mesh.level + 1)


def refine_uniform(mesh):
    return refine_red_green(mesh, range(mesh.n_triangles))


def mesh_to_dict(mesh):
    """Exchange form: {vertices, triangles, subdomain} with concatenated tables."""
    verts, tris, sub = [], [], []
    base = 0
    for p in mesh.pieces:
        verts.extend(p.vertices.tolist())
        tris.extend((p.triangles + base).tolist())
        sub.extend([p.subdomain] * p.n_triangles)
        base += len(p.vertices)
    return {"vertices": verts, "triangles": tris, "subdomain": sub}


def mesh_from_dict(data, partition):
    """Inverse of :func:`mesh_to_dict`; refinement tags are reset."""
    verts = np.asarray(data["vertices"], dtype=float)
    tris = np.asarray(data["triangles"], dtype=int).reshape(-1, 3)
    sub = np.asarray(data["subdomain"], dtype=int)
    pieces = []
    for s in range(partition.n_subdomains):
        t = tris[sub == s]
        used, inv = np.unique(t, return_inverse=True)
        m = len(t)
        pieces.append(
            SubdomainMesh(
                s,
                verts[used],
                inv.reshape(-1, 3),
                np.zeros(m, dtype=np.int8),
                -np.ones((m, 3), dtype=int),
                -np.ones(m, dtype=int),
            )
        )
    return CoarseMesh(partition, tuple(pieces), 0)
