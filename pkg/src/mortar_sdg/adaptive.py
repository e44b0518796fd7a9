"""SOLVE -> ESTIMATE -> MARK -> REFINE loop and the uniform comparison loop."""

import csv
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import assemble, discretize, n_free_dofs, solve
from .errors import AdaptiveRunError, ConfigError, MortarSDGError
from .estimators import (
    AGGREGATE_RULES,
    CHILDREN,
    ErrorReport,
    aggregate_indicators,
    compute_exact_errors,
    compute_local_estimators,
    global_estimates,
)
from .mesh import build_initial_mesh, refine_red_green, refine_uniform
from .mortar import FINER_SIDE, MORTAR_RULES

logger = logging.getLogger(__name__)

ADAPTIVE, UNIFORM = "adaptive", "uniform"
ETA1, ETA2 = "eta1", "eta2"
HISTORY_COLUMNS = (
    "level", "n_coarse", "n_fine", "n_dof", "err_l2", "err_energy",
    "eta1", "eta2", "eff1", "eff2", "n_marked", "wall_ms",
)


def doerfler_mark(xi_sq, theta):
    """
    Shortest prefix of the indicators sorted descending (ties by smaller id)
    whose sum reaches theta times the total.
    """
    if not 0.0 <= theta < 1.0:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")
    xi_sq = np.asarray(xi_sq, dtype=float)
    if theta == 0.0 or len(xi_sq) == 0:
        return np.zeros(0, dtype=int)
    order = np.lexsort((np.arange(len(xi_sq)), -xi_sq))
    cum = np.cumsum(xi_sq[order])
    target = theta * cum[-1]
    n = int(np.searchsorted(cum, target, side="left")) + 1
    if target <= 0.0:
        n = 0
    return np.sort(order[: min(n, len(order))])


@dataclass(frozen=True)
class AdaptiveConfig:
    theta: float = 0.5
    mode: str = ADAPTIVE
    estimator: str = ETA2
    max_levels: int = 10
    max_dofs: int = 100000
    k: int = 1
    mortar_rule: str = FINER_SIDE
    aggregate_rule: str = CHILDREN
    grid: object = None
    timing: bool = False

    def __post_init__(self):
        if self.mode not in (ADAPTIVE, UNIFORM):
            raise ConfigError(f"unknown mode {self.mode!r}", "mode")
        if self.estimator not in (ETA1, ETA2):
            raise ConfigError(f"unknown estimator {self.estimator!r}", "estimator")
        if self.mode == ADAPTIVE and not 0.0 < self.theta < 1.0:
            raise ConfigError("theta must lie in (0, 1)", "theta")
        if int(self.max_levels) < 1:
            raise ConfigError("max_levels must be >= 1", "max_levels")
        if int(self.max_dofs) < 1:
            raise ConfigError("max_dofs must be >= 1", "max_dofs")
        if self.mortar_rule not in MORTAR_RULES:
            raise ConfigError(f"unknown mortar rule {self.mortar_rule!r}", "mortar_rule")
        if self.aggregate_rule not in AGGREGATE_RULES:
            raise ConfigError(f"unknown aggregation rule {self.aggregate_rule!r}", "aggregate_rule")


@dataclass
class LevelRecord:
    report: ErrorReport
    n_marked: int
    wall_ms: float
    marked_centroids: np.ndarray = field(default=None, repr=False)


@dataclass
class RunHistory:
    problem: str
    config: AdaptiveConfig
    records: list = field(default_factory=list)
    final_mesh: object = None
    final_solution: object = None
    final_estimators: object = None

    def __len__(self):
        return len(self.records)

    def column(self, name):
        out = []
        for r in self.records:
            if name == "n_marked":
                out.append(r.n_marked)
            elif name == "wall_ms":
                out.append(r.wall_ms)
            else:
                out.append(getattr(r.report, name))
        return np.asarray(out, dtype=float)

    def rows(self):
        for r in self.records:
            e = r.report
            yield [
                e.level, e.n_coarse, e.n_fine, e.n_dof, e.err_l2, e.err_energy,
                e.eta1, e.eta2, e.eff1, e.eff2, r.n_marked, r.wall_ms,
            ]


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history.rows():
            w.writerow([_fmt(v) for v in row])


def read_history_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {c: np.zeros(0) for c in HISTORY_COLUMNS}
    return {c: np.array([float(r[c]) for r in rows]) for c in rows[0]}


def solve_level(problem, coarse, cfg, disc=None):
    """One SOLVE + ESTIMATE pass; returns (solution, local field, report)."""
    disc = disc if disc is not None else discretize(coarse, cfg.k, cfg.mortar_rule)
    sol = solve(assemble(disc, problem.f, problem.g, problem.singular_points))
    local = compute_local_estimators(sol, problem.f)
    eta1, eta2 = global_estimates(local)
    if problem.has_exact:
        e0, e1 = compute_exact_errors(sol, problem.exact_u, problem.exact_grad, singular_points=problem.singular_points)
    else:
        e0 = e1 = float("nan")
    rep = ErrorReport(coarse.level, coarse.n_triangles, disc.fine.n_triangles, n_free_dofs(disc), e0, e1, eta1, eta2)
    return sol, local, rep


def run_loop(problem, cfg, initial_mesh=None, on_level=None):
    """
    Adaptive or uniform refinement loop. Stops after ``max_levels`` levels or
    before a level whose dof count would exceed ``max_dofs``.

    ``on_level(level, coarse, solution, local)`` is called after each level.
    """
    grid = cfg.grid if cfg.grid is not None else problem.grid
    coarse = initial_mesh if initial_mesh is not None else build_initial_mesh(problem.partition, grid)
    hist = RunHistory(problem.name, cfg)
    which = cfg.estimator
    for level in range(int(cfg.max_levels)):
        t0 = time.perf_counter()
        try:
            disc = discretize(coarse, cfg.k, cfg.mortar_rule)
            if level > 0 and n_free_dofs(disc) > cfg.max_dofs:
                break
            sol, local, rep = solve_level(problem, coarse, cfg, disc)
        except MortarSDGError as exc:
            raise AdaptiveRunError(str(exc), level, hist) from exc
        rep = replace(rep, level=level)
        last = level == int(cfg.max_levels) - 1
        marked = np.zeros(0, dtype=int)
        if cfg.mode == ADAPTIVE and not last:
            xi = aggregate_indicators(local, which, coarse, cfg.aggregate_rule, sol.disc.fine)
            marked = doerfler_mark(xi.xi_sq, cfg.theta)
        cen = coarse.triangle_points()[marked].mean(axis=1) if len(marked) else np.zeros((0, 2))
        nxt = None
        if not last:
            nxt = refine_uniform(coarse) if cfg.mode == UNIFORM else refine_red_green(coarse, marked)
        wall = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
        n_marked = coarse.n_triangles if cfg.mode == UNIFORM and not last else len(marked)
        hist.records.append(LevelRecord(rep, n_marked, wall, cen))
        hist.final_mesh, hist.final_solution, hist.final_estimators = coarse, sol, local
        logger.info(
            "level %d: %d coarse, %d dofs, eta1 %.3e, eta2 %.3e", level, rep.n_coarse, rep.n_dof, rep.eta1, rep.eta2
        )
        if on_level is not None:
            on_level(level, coarse, sol, local)
        if nxt is None:
            break
        coarse = nxt
    return hist


def convergence_slope(x, y, tail=None):
    """Least-squares slope of log(y) against log(x) over the last ``tail`` points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if tail is not None:
        x, y = x[-tail:], y[-tail:]
    if len(x) < 2:
        raise ValueError("need at least two points for a slope")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
