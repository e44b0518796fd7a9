"""Command-line entry point: solve, adapt, uniform and rates."""

import argparse
import logging
import os
import sys

import numpy as np

from .adaptive import (
    AdaptiveConfig,
    convergence_slope,
    read_history_csv,
    run_loop,
    write_history_csv,
)
from .assembly import assemble, dump_matrix_market
from .config import ESTIMATORS, RunConfig, load_config
from .errors import AdaptiveRunError, ConfigError, MortarSDGError, SolverError
from .estimators import AGGREGATE_RULES, aggregate_indicators, write_breakdown_csv
from .io import write_coarse_vtk, write_fine_vtk, write_mesh_json
from .mortar import MORTAR_RULES
from .problems import BUILTIN, builtin_problems

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _grid(text):
    parts = [int(p) for p in text.split(",")]
    return parts[0] if len(parts) == 1 else parts


def _run_options(p, mode):
    p.add_argument("--config", help="JSON configuration file; command-line flags win")
    p.add_argument("--problem", choices=sorted(BUILTIN))
    p.add_argument("--k", type=int)
    p.add_argument("--grid", type=_grid, help="cells per side, one value or a comma list per subdomain")
    p.add_argument("--mortar-rule", choices=MORTAR_RULES)
    p.add_argument("--out", dest="output_dir")
    if mode != "solve":
        p.add_argument("--max-levels", type=int)
        p.add_argument("--max-dofs", type=int)
        p.add_argument("--estimator", choices=ESTIMATORS)
        p.add_argument("--timing", action="store_true", help="record measured wall time in history.csv")
        p.add_argument("--vtk-every-level", action="store_true")
    if mode == "adapt":
        p.add_argument("--theta", type=float)
        p.add_argument("--aggregate-rule", choices=AGGREGATE_RULES)
    if mode == "solve":
        p.add_argument("--dump-system", action="store_true", help="write system.mtx and rhs.txt")


def build_parser():
    parser = _Parser(prog="mortar-sdg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _run_options(sub.add_parser("solve", help="solve on the initial mesh and dump fields"), "solve")
    _run_options(sub.add_parser("adapt", help="adaptive run"), "adapt")
    _run_options(sub.add_parser("uniform", help="uniform refinement run"), "uniform")
    r = sub.add_parser("rates", help="least-squares convergence slopes of a history CSV")
    r.add_argument("history")
    r.add_argument("--tail", type=int, default=3, help="use the last m levels")
    return parser


def _resolve_config(args):
    base = load_config(args.config) if args.config else RunConfig()
    over = {}
    for key in ("problem", "k", "grid", "mortar_rule", "output_dir", "max_levels", "max_dofs",
                "estimator", "theta", "aggregate_rule"):
        if getattr(args, key, None) is not None:
            over[key] = getattr(args, key)
    if args.command == "adapt":
        over["mode"] = "adaptive"
    elif args.command == "uniform":
        over["mode"] = "uniform"
    return base.with_overrides(**over)


def _adaptive_config(cfg, args, max_levels=None):
    return AdaptiveConfig(
        theta=cfg.theta,
        mode=cfg.mode,
        estimator=cfg.estimator,
        max_levels=max_levels if max_levels is not None else cfg.max_levels,
        max_dofs=cfg.max_dofs,
        k=cfg.k,
        mortar_rule=cfg.mortar_rule,
        aggregate_rule=cfg.aggregate_rule,
        grid=cfg.grid,
        timing=bool(getattr(args, "timing", False)),
    )


def cmd_solve(args, cfg):
    problem = builtin_problems(cfg.problem)
    acfg = _adaptive_config(cfg, args, max_levels=1)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    hist = run_loop(problem, acfg)
    write_history_csv(hist, os.path.join(out, "history.csv"))
    sol, local = hist.final_solution, hist.final_estimators
    write_fine_vtk(os.path.join(out, "fields.vtk"), sol.disc.fine, local.values(cfg.estimator), sol)
    write_breakdown_csv(local, os.path.join(out, "estimators.csv"))
    write_mesh_json(hist.final_mesh, os.path.join(out, "mesh.json"))
    if args.dump_system:
        system = assemble(sol.disc, problem.f, problem.g, problem.singular_points)
        dump_matrix_market(system, os.path.join(out, "system.mtx"), os.path.join(out, "rhs.txt"))
    return EXIT_OK


def _cmd_run(args, cfg):
    problem = builtin_problems(cfg.problem)
    acfg = _adaptive_config(cfg, args)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)

    def on_level(level, coarse, sol, local):
        if args.vtk_every_level:
            write_fine_vtk(os.path.join(out, f"level_{level:03d}.vtk"), sol.disc.fine,
                           local.values(acfg.estimator), sol)

    try:
        hist = run_loop(problem, acfg, on_level=on_level)
    except AdaptiveRunError as exc:
        write_history_csv(exc.history, os.path.join(out, "history.csv"))
        raise
    write_history_csv(hist, os.path.join(out, "history.csv"))
    sol, local = hist.final_solution, hist.final_estimators
    write_fine_vtk(os.path.join(out, "final.vtk"), sol.disc.fine, local.values(acfg.estimator), sol)
    xi = aggregate_indicators(local, acfg.estimator, hist.final_mesh)
    write_coarse_vtk(os.path.join(out, "final_coarse.vtk"), hist.final_mesh, xi.xi_sq)
    write_mesh_json(hist.final_mesh, os.path.join(out, "mesh.json"))
    return EXIT_OK


def rates_table(data, tail):
    """Slopes of the error and estimator columns against n_dof and against h ~ n_coarse^(-1/2)."""
    n = len(data["level"])
    if n < 2:
        raise ValueError("history needs at least two levels")
    tail = min(tail, n)
    out = {}
    h = data["n_coarse"] ** -0.5
    for col in ("err_l2", "err_energy", "eta1", "eta2"):
        y = data[col]
        if np.all(np.isfinite(y[-tail:])) and np.all(y[-tail:] > 0):
            out[col] = (convergence_slope(data["n_dof"], y, tail), convergence_slope(h, y, tail))
    return out


def cmd_rates(args):
    data = read_history_csv(args.history)
    if args.tail < 2:
        raise ConfigError("must be >= 2", "tail")
    table = rates_table(data, args.tail)
    print(f"# slopes over the last {min(args.tail, len(data['level']))} levels")
    print("quantity,slope_vs_dofs,slope_vs_h")
    for col, (sd, sh) in table.items():
        print(f"{col},{sd:.6f},{sh:.6f}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "rates":
            return cmd_rates(args)
        cfg = _resolve_config(args)
        if args.command == "solve":
            return cmd_solve(args, cfg)
        return _cmd_run(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, AdaptiveRunError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (MortarSDGError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
