"""
Benchmark problems: a smooth peak, a point singularity of a non-harmonic
function, and the checkerboard interface problem with its transmission
exponent.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .errors import ConfigError
from .mesh import Rectangle, SubdomainPartition, uniform_partition


@dataclass(frozen=True)
class ProblemSpec:
    """Data of one Dirichlet problem -div(rho grad u) = f, u = g on the boundary."""

    name: str
    partition: SubdomainPartition
    f: object
    g: object
    exact_u: object = None
    exact_grad: object = None
    singular_points: tuple = ()
    grid: int = 2

    @property
    def has_exact(self):
        return self.exact_u is not None and self.exact_grad is not None

    def boundary_samples(self, n=100, seed=0):
        """n points on the outer boundary, deterministic."""
        b = self.partition.bbox
        rng = np.random.default_rng(seed)
        s = rng.uniform(0.0, 1.0, n)
        side = np.arange(n) % 4
        x = np.where(side == 0, b.x0 + s * (b.x1 - b.x0), np.where(side == 2, b.x1 - s * (b.x1 - b.x0), 0.0))
        y = np.where(side == 1, b.y0 + s * (b.y1 - b.y0), np.where(side == 3, b.y1 - s * (b.y1 - b.y0), 0.0))
        x = np.where(side == 1, b.x1, np.where(side == 3, b.x0, x))
        y = np.where(side == 0, b.y0, np.where(side == 2, b.y1, y))
        return np.column_stack([x, y])

    def check_boundary(self, n=100, tol=1e-12):
        """Largest |g - u| over boundary samples; raises if above ``tol``."""
        if self.exact_u is None:
            return 0.0
        p = self.boundary_samples(n)
        err = float(np.max(np.abs(self.g(p[:, 0], p[:, 1]) - self.exact_u(p[:, 0], p[:, 1]))))
        if err > tol:
            raise ConfigError(f"boundary data differs from the exact solution by {err:.3e}", self.name)
        return err


# smooth peak at the origin corner
def peak_u(x, y):
    return 1000.0 * x * y * np.exp(-100.0 * (x**2 + y**2))


def peak_grad(x, y):
    e = np.exp(-100.0 * (x**2 + y**2))
    return 1000.0 * y * e * (1.0 - 200.0 * x**2), 1000.0 * x * e * (1.0 - 200.0 * y**2)


def peak_f(x, y):
    return 1000.0 * x * y * np.exp(-100.0 * (x**2 + y**2)) * (1200.0 - 40000.0 * (x**2 + y**2))


# r^{1/2} cos(2 theta) about (0.5, 0.5)
CENTER = np.array([0.5, 0.5])


def _polar(x, y, c):
    dx, dy = x - c[0], y - c[1]
    return np.hypot(dx, dy), np.arctan2(dy, dx)


def sqrt_u(x, y):
    r, t = _polar(x, y, CENTER)
    return np.sqrt(r) * np.cos(2.0 * t)


def sqrt_grad(x, y):
    r, t = _polar(x, y, CENTER)
    with np.errstate(divide="ignore", invalid="ignore"):
        ur = 0.5 / np.sqrt(r) * np.cos(2.0 * t)
        ut = -2.0 / np.sqrt(r) * np.sin(2.0 * t)
    return ur * np.cos(t) - ut * np.sin(t), ur * np.sin(t) + ut * np.cos(t)


def sqrt_f(x, y):
    # Laplacian of r^a cos(n t) is (a^2 - n^2) r^(a-2) cos(n t)
    r, t = _polar(x, y, CENTER)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 3.75 * r**-1.5 * np.cos(2.0 * t)


@dataclass(frozen=True)
class KelloggSolution:
    """u = r^alpha (K_i sin(alpha t) + S_i cos(alpha t)) on quadrant i (counterclockwise from x>0, y>0)."""

    alpha: float
    K: np.ndarray
    S: np.ndarray
    a: float
    b: float

    @property
    def rho(self):
        return (self.a, self.b, self.a, self.b)

    @staticmethod
    def quadrant(x, y):
        t = np.mod(np.arctan2(y, x), 2.0 * np.pi)
        q = np.minimum((t // (0.5 * np.pi)).astype(int), 3)
        return q, t

    def u(self, x, y):
        q, t = self.quadrant(x, y)
        r = np.hypot(x, y)
        al = self.alpha
        return r**al * (self.K[q] * np.sin(al * t) + self.S[q] * np.cos(al * t))

    def grad(self, x, y):
        q, t = self.quadrant(x, y)
        r = np.hypot(x, y)
        al = self.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            ur = al * r ** (al - 1) * (self.K[q] * np.sin(al * t) + self.S[q] * np.cos(al * t))
            ut = al * r ** (al - 1) * (self.K[q] * np.cos(al * t) - self.S[q] * np.sin(al * t))
        return ur * np.cos(t) - ut * np.sin(t), ur * np.sin(t) + ut * np.cos(t)

    def interface_residuals(self, n=50):
        """Max jumps of u and of rho du/dtheta across the four axes at n radii."""
        r = np.linspace(0.02, 1.0, n)
        al = self.alpha
        ju = jf = 0.0
        for q in range(4):
            p = (q + 1) % 4
            t_hi = (q + 1) * 0.5 * np.pi
            t_lo = t_hi if p else 0.0
            rq, rp = self.rho[q], self.rho[p]
            uq = r**al * (self.K[q] * np.sin(al * t_hi) + self.S[q] * np.cos(al * t_hi))
            up = r**al * (self.K[p] * np.sin(al * t_lo) + self.S[p] * np.cos(al * t_lo))
            fq = rq * al * r**al * (self.K[q] * np.cos(al * t_hi) - self.S[q] * np.sin(al * t_hi))
            fp = rp * al * r**al * (self.K[p] * np.cos(al * t_lo) - self.S[p] * np.sin(al * t_lo))
            ju = max(ju, float(np.max(np.abs(uq - up))))
            jf = max(jf, float(np.max(np.abs(fq - fp))))
        return ju, jf


def transmission_matrix(alpha, a, b):
    """
    Rows: continuity of u and of rho du/dtheta at theta = pi/2, pi, 3pi/2 and
    at 2pi (quadrant 4) against 0 (quadrant 1). Unknowns [K1, S1, ..., K4, S4].
    """
    rho = (a, b, a, b)
    M = np.zeros((8, 8))
    for q in range(4):
        p = (q + 1) % 4
        t_hi = (q + 1) * 0.5 * np.pi
        t_lo = t_hi if p else 0.0
        s, c = np.sin(alpha * t_hi), np.cos(alpha * t_hi)
        s2, c2 = np.sin(alpha * t_lo), np.cos(alpha * t_lo)
        M[2 * q, 2 * q : 2 * q + 2] = (s, c)
        M[2 * q, 2 * p : 2 * p + 2] = (-s2, -c2)
        M[2 * q + 1, 2 * q : 2 * q + 2] = (rho[q] * c, -rho[q] * s)
        M[2 * q + 1, 2 * p : 2 * p + 2] = (-rho[p] * c2, rho[p] * s2)
    return M


def transmission_determinant(alpha, a, b):
    return float(np.linalg.det(transmission_matrix(alpha, a, b)))


def kellogg_constants(a, b, n_scan=4000, xtol=1e-14):
    """
    Smallest exponent alpha in (0, 1] with a nontrivial transmission solution,
    and its coefficients normalised to K1^2 + S1^2 = 1, K1 > 0.
    """
    if a <= 0 or b <= 0:
        raise ConfigError("coefficients must be positive", "rho")
    grid = np.linspace(1e-3, 1.0, n_scan)
    d = np.array([transmission_determinant(x, a, b) for x in grid])
    alpha = None
    for i in range(len(grid) - 1):
        if d[i] == 0.0:
            alpha = grid[i]
            break
        if d[i] * d[i + 1] < 0:
            alpha = bisect(transmission_determinant, grid[i], grid[i + 1], args=(a, b), xtol=xtol, rtol=4 * np.finfo(float).eps)
            break
    if alpha is None:
        # touching root (a = b gives a double root at alpha = 1)
        sv = [np.linalg.svd(transmission_matrix(x, a, b), compute_uv=False)[-1] for x in grid]
        i = int(np.argmin(sv))
        if sv[i] > 1e-10:
            raise ConfigError("no transmission exponent in (0, 1]", "rho")
        alpha = grid[i]
    _, sv, Vt = np.linalg.svd(transmission_matrix(alpha, a, b))
    v = Vt[-1]
    v = v / np.hypot(v[0], v[1])
    if v[0] < 0:
        v = -v
    return KelloggSolution(float(alpha), v[0::2].copy(), v[1::2].copy(), float(a), float(b))


def example1():
    part = uniform_partition(0.0, 0.0, 1.0, 1.0, 2, 2, 1.0)
    return ProblemSpec("example1", part, peak_f, peak_u, peak_u, peak_grad, (), 2)


def example2():
    part = uniform_partition(0.0, 0.0, 1.0, 1.0, 2, 2, 1.0)
    return ProblemSpec("example2", part, sqrt_f, sqrt_u, sqrt_u, sqrt_grad, (tuple(CENTER),), 2)


def kellogg_partition(a=5.0, b=1.0):
    rects = (
        Rectangle(0.0, 0.0, 1.0, 1.0),
        Rectangle(-1.0, 0.0, 0.0, 1.0),
        Rectangle(-1.0, -1.0, 0.0, 0.0),
        Rectangle(0.0, -1.0, 1.0, 0.0),
    )
    return SubdomainPartition(rects, (a, b, a, b))


def example3(a=5.0, b=1.0):
    sol = kellogg_constants(a, b)
    zero = lambda x, y: np.zeros(np.broadcast(x, y).shape)
    return ProblemSpec("example3", kellogg_partition(a, b), zero, sol.u, sol.u, sol.grad, ((0.0, 0.0),), 2)


BUILTIN = {"example1": example1, "example2": example2, "example3": example3}


def builtin_problems(name):
    try:
        return BUILTIN[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(BUILTIN)}") from None
