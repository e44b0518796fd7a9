"""
Quadrature rules on the reference segment [0, 1] and the reference
triangle with vertices (0,0), (1,0), (0,1).

Triangle rules are collapsed (Duffy) tensor products of Gauss-Jacobi and
Gauss-Legendre points, so any polynomial degree is available and all
weights are positive. Weights sum to the reference measure: 1 for the
segment, 1/2 for the triangle.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    """Points in reference coordinates and matching weights."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def gauss_segment(npoints):
    """Gauss-Legendre rule on [0, 1], exact to degree 2*npoints - 1."""
    if npoints < 1:
        raise ValueError("npoints must be >= 1")
    x, w = np.polynomial.legendre.leggauss(npoints)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, 2 * npoints - 1)


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """
    Collapsed Gauss rule on the reference triangle exact to ``degree``.

    Uses n = ceil((degree + 1) / 2) points per direction, n**2 in total.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    n = max(1, (degree + 2) // 2)
    # Jacobi weight (1 - s) absorbs the Duffy Jacobian.
    xs, ws = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (xs + 1.0)
    ws = 0.25 * ws
    t, wt = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (t + 1.0)
    wt = 0.5 * wt
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
    return QuadratureRule(pts, W.ravel(), degree)


@lru_cache(maxsize=None)
def subdivided_triangle_rule(degree, levels, corner=None, graded_tip=False):
    """
    Composite rule built by ``levels`` rounds of red subdivision.

    With ``corner`` in {0, 1, 2} only the sub-triangles touching that
    reference vertex are subdivided further, which grades the rule towards a
    point singularity at the corner. ``corner=None`` subdivides uniformly.
    ``graded_tip`` integrates the innermost corner piece with
    :func:`corner_graded_rule`.
    """
    base = triangle_rule(degree)
    tris = [np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])]
    done = []
    ref_corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    for _ in range(levels):
        nxt = []
        for v in tris:
            m01, m12, m20 = (v[0] + v[1]) / 2, (v[1] + v[2]) / 2, (v[2] + v[0]) / 2
            kids = [
                np.array([v[0], m01, m20]),
                np.array([m01, v[1], m12]),
                np.array([m20, m12, v[2]]),
                np.array([m01, m12, m20]),
            ]
            for kid in kids:
                if corner is None or np.any(
                    np.all(np.abs(kid - ref_corners[corner]) < 1e-14, axis=1)
                ):
                    nxt.append(kid)
                else:
                    done.append(kid)
        tris = nxt
    pts, wts = [], []
    tip = corner is not None and graded_tip
    for v in done + tris:
        rule = base
        if tip and np.all(np.abs(v[corner] - ref_corners[corner]) < 1e-14):
            rule = corner_graded_rule(degree, corner)
        J = np.column_stack([v[1] - v[0], v[2] - v[0]])
        det = abs(np.linalg.det(J))
        pts.append(v[0] + rule.points @ J.T)
        wts.append(rule.weights * det)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), degree)


@lru_cache(maxsize=None)
def corner_graded_rule(degree, corner, grading=2, npoints=None):
    """
    Collapsed rule with the collapse at reference vertex ``corner`` and radial
    coordinate s = t**grading.

    For grading 2 the area element is 2 t**3 dt dw, which cancels singularities
    up to r**-1.5 at the corner: such integrands become smooth in (t, w).
    """
    # a degree-p polynomial becomes degree 2p + 3 in t
    n = npoints if npoints is not None else degree + 2
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    c = corners[corner]
    a = corners[(corner + 1) % 3] - c
    b = corners[(corner + 2) % 3] - c
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    T, W = np.meshgrid(x, x, indexing="ij")
    WT = np.outer(w, w)
    s = T**grading
    pts = c + s[..., None] * ((1.0 - W)[..., None] * a + W[..., None] * b)
    # |a x b| = 1 for every corner of the reference triangle
    jac = grading * T ** (grading - 1) * s
    return QuadratureRule(pts.reshape(-1, 2), (WT * jac).ravel(), degree)
