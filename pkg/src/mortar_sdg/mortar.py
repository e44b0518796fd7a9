"""
Interface trace meshes, mortar/non-mortar side selection and the merged
1-D segmentation that carries every cross-grid integral.
"""

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, MeshConsistencyError
from .fine_mesh import INTERFACE

FINER_SIDE = "finer_side"
LOWER_INDEX = "lower_index"
MORTAR_RULES = (FINER_SIDE, LOWER_INDEX)


@dataclass(frozen=True)
class TraceMesh:
    """Restriction of one side's mesh to an interface, in arclength."""

    interface: int
    side: int
    breakpoints: np.ndarray
    edges: np.ndarray
    triangles: np.ndarray

    @property
    def n_segments(self):
        return len(self.edges)


@dataclass(frozen=True)
class MergedSegments:
    """Common refinement of two traces; one row per merged segment."""

    s0: np.ndarray
    s1: np.ndarray
    edge_a: np.ndarray
    edge_b: np.ndarray

    @property
    def breakpoints(self):
        return np.concatenate([self.s0[:1], self.s1])

    def __len__(self):
        return len(self.s0)


@dataclass(frozen=True)
class InterfaceMortar:
    """Mortar data of one interface: sides, normal, sign factors, merged segments."""

    interface: object
    nonmortar: int
    mortar: int
    traces: dict
    segments: object = None

    @property
    def normal(self):
        return self.interface.normal

    def sign(self, side):
        return self.interface.sign(side)

    @property
    def nonmortar_trace(self):
        return self.traces[self.nonmortar]

    @property
    def mortar_trace(self):
        return self.traces[self.mortar]

    @property
    def nonmortar_edge(self):
        """Non-mortar fine edge of every merged segment."""
        return self.segments.edge_a

    @property
    def mortar_edge(self):
        return self.segments.edge_b


@dataclass(frozen=True)
class MortarLayout:
    interfaces: tuple

    def nonmortar_edges(self):
        """T^{Gamma,h}: every non-mortar fine edge, interface-major and in arclength order."""
        if not self.interfaces:
            return np.zeros(0, dtype=int)
        return np.concatenate([m.nonmortar_trace.edges for m in self.interfaces])


def extract_trace_meshes(fine, interface):
    """Trace meshes of both adjacent subdomains on one interface."""
    out = []
    L = interface.length
    for side in (interface.i, interface.j):
        sel = np.flatnonzero(
            (fine.edge_interface == interface.index)
            & (fine.subdomain[fine.edge_tris[:, 0]] == side)
            & (fine.edge_tag == INTERFACE)
        )
        if len(sel) == 0:
            raise MeshConsistencyError(
                f"subdomain {side} has no edges on interface {interface.index}"
            )
        s = interface.arclength(fine.vertices[fine.edge_vertices[sel]].reshape(-1, 2)).reshape(-1, 2)
        lo, hi = s.min(axis=1), s.max(axis=1)
        order = np.argsort(lo, kind="stable")
        lo, hi, sel = lo[order], hi[order], sel[order]
        tol = 1e-12 * L
        if abs(lo[0]) > tol or abs(hi[-1] - L) > tol or np.any(np.abs(lo[1:] - hi[:-1]) > tol):
            raise MeshConsistencyError(
                f"side {side} edges do not tile interface {interface.index}"
            )
        bp = np.concatenate([[0.0], hi[:-1], [L]])
        out.append(TraceMesh(interface.index, side, bp, sel, fine.edge_tris[sel, 0]))
    return tuple(out)


def assign_mortar_sides(traces, interface, rule=FINER_SIDE):
    """Pick the non-mortar side; FINER_SIDE takes the side with more segments."""
    ti, tj = traces
    if rule == FINER_SIDE:
        nonmortar = tj.side if tj.n_segments > ti.n_segments else ti.side
    elif rule == LOWER_INDEX:
        nonmortar = min(ti.side, tj.side)
    else:
        raise ValueError(f"unknown mortar rule {rule!r}")
    mortar = tj.side if nonmortar == ti.side else ti.side
    return InterfaceMortar(interface, nonmortar, mortar, {ti.side: ti, tj.side: tj})


def merge_segments(trace_a, trace_b, length):
    """
    Sorted union of the breakpoints of two traces, duplicates collapsed at
    1e-12 * length; each merged segment records its parent edge on both sides.
    """
    tol = 1e-12 * length
    for t in (trace_a, trace_b):
        if abs(t.breakpoints[0]) > tol or abs(t.breakpoints[-1] - length) > tol:
            raise GeometryError("trace endpoints do not match the interface")
    pts = np.sort(np.concatenate([trace_a.breakpoints, trace_b.breakpoints]))
    keep = [pts[0]]
    for p in pts[1:]:
        if p - keep[-1] > tol:
            keep.append(p)
    keep[0], keep[-1] = 0.0, length
    bp = np.array(keep)
    mid = 0.5 * (bp[:-1] + bp[1:])

    def owner(t):
        k = np.searchsorted(t.breakpoints, mid, side="right") - 1
        return t.edges[np.clip(k, 0, t.n_segments - 1)]

    return MergedSegments(bp[:-1].copy(), bp[1:].copy(), owner(trace_a), owner(trace_b))


def build_mortar_layout(fine, rule=FINER_SIDE):
    items = []
    for f in fine.coarse.partition.interfaces:
        traces = extract_trace_meshes(fine, f)
        m = assign_mortar_sides(traces, f, rule)
        seg = merge_segments(m.nonmortar_trace, m.mortar_trace, f.length)
        items.append(InterfaceMortar(f, m.nonmortar, m.mortar, m.traces, seg))
    return MortarLayout(tuple(items))
