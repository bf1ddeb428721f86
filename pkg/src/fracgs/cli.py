"""Command-line surface: every solver capability as a reproducible experiment.

Subcommands: eig, solve, check, probe-unique, branch, fold, normalized,
homotopy, evolve. Shared flags override config-file values; primary outputs
are written atomically and are byte-identical across reruns with the same
config and seed. Exit codes: 0 success, 2 usage/config error, 3
non-convergence, 4 model-regime violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .core import Field, FieldError, GridError, make_grid
from .errors import (
    ConfigError,
    FoldError,
    NonConvergenceError,
    PositivityError,
    RegimeError,
    RootRangeError,
    StateFileError,
)
from .continuation import find_fold, s_homotopy, solve_normalized, trace_branch
from .evolution import EVOLUTION_M_LIMIT, evolve, smooth_noise
from .groundstate import SolverOptions, recommended_grid, solve_ground_state, uniqueness_probe
from .model import ModelParams, identity_residuals, residual_field
from .spectrum import ground_eigenpair
from .stateio import (
    RunConfig,
    config_from_text,
    config_to_dict,
    emit_branch_csv,
    emit_trajectory_csv,
    read_state,
    write_json_atomic,
    write_state,
)

DEFAULT_OUT = {
    "eig": "fracgs-eig.json",
    "solve": "fracgs-solve.json",
    "probe-unique": "fracgs-probe.json",
    "branch": "fracgs-branch.csv",
    "fold": "fracgs-fold.json",
    "normalized": "fracgs-normalized.json",
    "homotopy": "fracgs-homotopy.json",
    "evolve": "fracgs-evolve.csv",
}


def _shared_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--N", type=int, default=None, help="dimension (1 or 2)")
    p.add_argument("--s", type=float, default=None, help="fractional order in (0, 1]")
    p.add_argument("--q", type=float, default=None, help="nonlinearity exponent > 2")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="frequency parameter")
    p.add_argument("--L", type=float, default=None, help="half-width (default: policy)")
    p.add_argument("--M", type=int, default=None, help="points per axis (default: policy)")
    p.add_argument("--tol", type=float, default=None, help="solver tolerance on ||F||_2")
    p.add_argument("--seed", type=int, default=None, help="seed for randomized starts")
    p.add_argument("--config", type=str, default=None, help="config file (flat key = value)")
    p.add_argument("--out", type=str, default=None, help="primary output path")
    p.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    return p


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_parser()
    parser = argparse.ArgumentParser(prog="fracgs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("eig", parents=[shared], help="bottom eigenpair of the linear operator")
    sub.add_parser("solve", parents=[shared], help="ground state at fixed lambda")

    p = sub.add_parser("check", parents=[shared], help="identity report for a state file")
    p.add_argument("--state", type=str, required=True, help="state file produced by solve/eig")

    p = sub.add_parser("probe-unique", parents=[shared], help="multi-start uniqueness probe")
    p.add_argument("--n-starts", type=int, default=None)

    for name in ("branch", "fold", "normalized"):
        p = sub.add_parser(name, parents=[shared], help=f"{name} computation")
        p.add_argument("--lambda-min", type=float, default=None)
        p.add_argument("--points", type=int, default=None)
        p.add_argument("--delta0", type=float, default=None)
        if name in ("fold", "normalized"):
            p.add_argument("--tol-lambda", type=float, default=None)
        if name == "normalized":
            p.add_argument("--c", type=float, default=None, help="target mass")

    p = sub.add_parser("homotopy", parents=[shared], help="continuation in the fractional order")
    p.add_argument("--s-target", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)

    p = sub.add_parser("evolve", parents=[shared], help="time evolution of the ground state")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--eps", type=float, default=None, help="relative perturbation size")
    p.add_argument("--sample-every", type=int, default=None)
    return parser


_FLAG_TO_ATTR = {
    "N": "N",
    "s": "s",
    "q": "q",
    "lam": "lam",
    "L": "L",
    "M": "M",
    "tol": "tol",
    "seed": "seed",
    "out": "out",
    "n_starts": "n_starts",
    "lambda_min": "lambda_min",
    "points": "points",
    "delta0": "delta0",
    "tol_lambda": "fold_tol_lambda",
    "c": "normalized_c",
    "s_target": "s_target",
    "steps": "homotopy_steps",
    "dt": "dt",
    "T": "T",
    "eps": "eps",
    "sample_every": "sample_every",
}


def assemble_config(args: argparse.Namespace) -> RunConfig:
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = config_from_text(fh.read())
    else:
        cfg = RunConfig()
    overrides = {}
    for flag, attr in _FLAG_TO_ATTR.items():
        val = getattr(args, flag, None)
        if val is not None:
            overrides[attr] = val
    return replace(cfg, **overrides) if overrides else cfg


def _params(cfg: RunConfig) -> ModelParams:
    return ModelParams(cfg.N, cfg.s, cfg.q, cfg.lam)


def _grid(cfg: RunConfig, params: ModelParams):
    if cfg.L is not None and cfg.M is not None:
        return make_grid(params.N, cfg.L, cfg.M)
    if cfg.L is not None or cfg.M is not None:
        raise ConfigError("grid.L and grid.M must be given together (or neither)")
    return None  # policy decides


def _opts(cfg: RunConfig) -> SolverOptions:
    return SolverOptions(tol=cfg.tol)


def _emit_summary(summary: dict, as_json: bool) -> None:
    if as_json:
        from .stateio import jsonable

        print(json.dumps(jsonable(summary)))
    else:
        for key, val in summary.items():
            if key == "config":
                continue
            print(f"{key} = {val}")


def _out_path(cfg: RunConfig, command: str) -> str:
    return cfg.out if cfg.out else DEFAULT_OUT[command]


def _cmd_eig(cfg: RunConfig, as_json: bool) -> int:
    params = _params(cfg)
    grid = _grid(cfg, params) or recommended_grid(params)
    pair = ground_eigenpair(params.s, grid)
    path = _out_path(cfg, "eig")
    # a plain state file (readable by `check`), with the config echoed alongside
    write_state(path, pair.vector, replace(params, lam=pair.value), config=config_to_dict(cfg))
    _emit_summary(
        {"lambda_1": pair.value, "grid_L": grid.L, "grid_M": grid.M, "out": path},
        as_json,
    )
    return 0


def _solve_one(cfg: RunConfig):
    params = _params(cfg)
    grid = _grid(cfg, params)
    return solve_ground_state(params, grid, _opts(cfg))


def _cmd_solve(cfg: RunConfig, as_json: bool) -> int:
    gs = _solve_one(cfg)
    path = _out_path(cfg, "solve")
    write_state(path, gs.u, gs.params, config=config_to_dict(cfg))
    ir = gs.identity_report
    summary = {
        "lambda": gs.params.lam,
        "mass": gs.mass,
        "action": gs.action,
        "residual_norm": gs.residual_norm,
        "pohozaev_rel": ir.pohozaev_rel,
        "action_simple_rel": ir.action_simple_rel,
        "energy_lb_gap": ir.energy_lb_gap,
        "min_abs_eig": gs.spectrum_edges.min_abs_eig if gs.spectrum_edges else None,
        "grid_L": gs.u.grid.L,
        "grid_M": gs.u.grid.M,
        "converged": gs.solver_log.converged,
        "out": path,
    }
    _emit_summary(summary, as_json)
    return 0 if gs.solver_log.converged else 3


def _cmd_check(cfg: RunConfig, state_path: str, as_json: bool) -> int:
    f, params = read_state(state_path)
    if f.kind != "real":
        raise StateFileError("check expects a real state")
    _, rnorm = residual_field(f, params)
    ir = identity_residuals(f, params)
    summary = {
        "lambda": params.lam,
        "residual_norm": rnorm,
        "pohozaev_rel": ir.pohozaev_rel,
        "id1_rel": ir.id1_rel,
        "id2_rel": ir.id2_rel,
        "action_simple_rel": ir.action_simple_rel,
        "energy_lb_gap": ir.energy_lb_gap,
        "k": ir.k,
    }
    if cfg.out:
        write_json_atomic(cfg.out, {"summary": summary, "config": config_to_dict(cfg)})
        summary["out"] = cfg.out
    _emit_summary(summary, as_json)
    return 0


def _cmd_probe(cfg: RunConfig, as_json: bool) -> int:
    params = _params(cfg)
    grid = _grid(cfg, params) or recommended_grid(params)
    report = uniqueness_probe(params, grid, cfg.n_starts, cfg.seed, _opts(cfg))
    path = _out_path(cfg, "probe-unique")
    doc = {
        "n_starts": report.n_starts,
        "seed": report.seed,
        "max_pairwise_distance": report.max_pairwise_distance,
        "masses": list(report.masses),
        "failures": [list(f) for f in report.failures],
        "config": config_to_dict(cfg),
    }
    write_json_atomic(path, doc)
    _emit_summary(
        {
            "n_starts": report.n_starts,
            "n_converged": len(report.masses),
            "max_pairwise_distance": report.max_pairwise_distance,
            "out": path,
        },
        as_json,
    )
    return 0 if not report.failures else 3


def _trace(cfg: RunConfig):
    params = _params(cfg)
    grid = _grid(cfg, params)
    return trace_branch(
        (params.N, params.s, params.q),
        grid=grid,
        lam_min=cfg.lambda_min,
        points=cfg.points,
        opts=_opts(cfg),
        delta0=cfg.delta0,
    )


def _cmd_branch(cfg: RunConfig, as_json: bool) -> int:
    curve = _trace(cfg)
    path = _out_path(cfg, "branch")
    emit_branch_csv(curve, path)
    _emit_summary(
        {
            "lambda_1": curve.lam1,
            "points": len(curve.points),
            "complete": curve.complete,
            "fail_lambda": curve.fail_lam,
            "mass_max": float(curve.masses().max()),
            "quality_violations": len(curve.quality_violations),
            "out": path,
        },
        as_json,
    )
    return 0 if curve.complete else 3


def _cmd_fold(cfg: RunConfig, as_json: bool) -> int:
    curve = _trace(cfg)
    fold = find_fold(curve, tol_lam=cfg.fold_tol_lambda, opts=_opts(cfg))
    path = _out_path(cfg, "fold")
    write_json_atomic(
        path,
        {
            "lambda_star": fold.lam_star,
            "c0": fold.c0,
            "bracket_width": fold.bracket_width,
            "unimodal": fold.unimodal,
            "lambda_1": curve.lam1,
            "config": config_to_dict(cfg),
        },
    )
    _emit_summary(
        {"lambda_star": fold.lam_star, "c0": fold.c0, "bracket_width": fold.bracket_width,
         "unimodal": fold.unimodal, "out": path},
        as_json,
    )
    return 0


def _cmd_normalized(cfg: RunConfig, as_json: bool) -> int:
    if cfg.normalized_c is None:
        raise ConfigError("normalized needs --c (or normalized.c in the config)")
    curve = _trace(cfg)
    fold = find_fold(curve, tol_lam=cfg.fold_tol_lambda, opts=_opts(cfg))
    states = solve_normalized(cfg.normalized_c, curve, fold=fold, opts=_opts(cfg))
    path = _out_path(cfg, "normalized")
    doc = {
        "c": cfg.normalized_c,
        "c0": fold.c0,
        "lambda_star": fold.lam_star,
        "solutions": [
            {
                "lambda": gs.params.lam,
                "mass": gs.mass,
                "action": gs.action,
                "residual_norm": gs.residual_norm,
                "min_abs_eig": gs.spectrum_edges.min_abs_eig if gs.spectrum_edges else None,
            }
            for gs in states
        ],
        "config": config_to_dict(cfg),
    }
    write_json_atomic(path, doc)
    _emit_summary(
        {"c": cfg.normalized_c, "c0": fold.c0, "n_solutions": len(states),
         "lambdas": [gs.params.lam for gs in states], "out": path},
        as_json,
    )
    return 0


def _cmd_homotopy(cfg: RunConfig, as_json: bool) -> int:
    params = _params(cfg)
    grid = _grid(cfg, params)
    s_path = np.linspace(1.0, cfg.s_target, cfg.homotopy_steps)
    report = s_homotopy(cfg.lam, cfg.q, cfg.N, s_path, grid=grid, opts=_opts(cfg))
    path = _out_path(cfg, "homotopy")
    write_json_atomic(
        path,
        {
            "completed": report.completed,
            "fail_s": report.fail_s,
            "endpoint_distance": report.endpoint_distance,
            "endpoint_mass_direct": report.endpoint_mass_direct,
            "steps": [
                {
                    "s": st.s,
                    "lambda_1": st.lam1,
                    "mass": st.mass,
                    "residual_norm": st.residual_norm,
                    "min_abs_eig": st.min_abs_eig,
                    "newton_iters": st.newton_iters,
                    "grid_L": st.grid_L,
                    "grid_M": st.grid_M,
                }
                for st in report.steps
            ],
            "config": config_to_dict(cfg),
        },
    )
    _emit_summary(
        {
            "completed": report.completed,
            "steps": len(report.steps),
            "min_abs_eig_min": min((st.min_abs_eig for st in report.steps), default=None),
            "endpoint_distance": report.endpoint_distance,
            "out": path,
        },
        as_json,
    )
    return 0 if report.completed else 3


def _cmd_evolve(cfg: RunConfig, as_json: bool) -> int:
    params = _params(cfg)
    grid = _grid(cfg, params)
    if grid is None:
        grid = recommended_grid(params)
        if grid.N == 1 and grid.M > EVOLUTION_M_LIMIT:
            grid = make_grid(1, grid.L, EVOLUTION_M_LIMIT)
    gs = solve_ground_state(params, grid, _opts(cfg))
    psi0 = gs.u.values.astype(complex)
    if cfg.eps > 0:
        eta = smooth_noise(grid, cfg.seed)
        psi0 = gs.u.values * (1.0 + cfg.eps * eta.values) + 0j
    traj = evolve(
        Field(grid, psi0), params, cfg.dt, cfg.T, u_ref=gs.u, sample_every=cfg.sample_every
    )
    path = _out_path(cfg, "evolve")
    emit_trajectory_csv(traj, path)
    _emit_summary(
        {
            "steps": int(round(cfg.T / cfg.dt)),
            "mass_drift": traj.mass_drift,
            "energy_drift": traj.energy_drift,
            "max_deviation": float(np.max(traj.deviation)),
            "blowup": traj.blowup,
            "out": path,
        },
        as_json,
    )
    return 0


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = assemble_config(args)
        as_json = bool(args.json)
        if args.command == "eig":
            return _cmd_eig(cfg, as_json)
        if args.command == "solve":
            return _cmd_solve(cfg, as_json)
        if args.command == "check":
            return _cmd_check(cfg, args.state, as_json)
        if args.command == "probe-unique":
            return _cmd_probe(cfg, as_json)
        if args.command == "branch":
            return _cmd_branch(cfg, as_json)
        if args.command == "fold":
            return _cmd_fold(cfg, as_json)
        if args.command == "normalized":
            return _cmd_normalized(cfg, as_json)
        if args.command == "homotopy":
            return _cmd_homotopy(cfg, as_json)
        if args.command == "evolve":
            return _cmd_evolve(cfg, as_json)
        parser.error(f"unknown command {args.command}")
    except (ConfigError, StateFileError, GridError, FieldError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RegimeError as exc:
        print(f"regime violation: {exc}", file=sys.stderr)
        return 4
    except (NonConvergenceError, PositivityError, FoldError, RootRangeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
