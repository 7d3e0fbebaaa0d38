"""Command-line front end: run simulations, robustness checks and sweeps.

Subcommands
-----------
simulate          integrate one run from a YAML config; writes trajectory CSV,
                  events JSON-lines and an invariant report JSON
robustness        threshold check of an equilibrium (explicit vector or
                  size@value cluster spec); writes/prints a JSON report
verify            empirical merge table over a gap sweep and placement grid
region            merge-basin membership grid plus the bounding curve polyline
check-equilibrium residual and weak/strong verdict for a state vector

Exit codes: simulate 0 clean / 2 invariant violation / 1 solver error;
robustness 0 robust / 3 not robust / 1 non-equilibrium input; config or
usage problems exit 64.  Environment variables HKSIM_SEED, HKSIM_POLICY
and HKSIM_OUT override the corresponding flags (CI hook).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from multiprocessing import Pool

import numpy as np
import yaml

from .analysis import f_residual, is_equilibrium, monitor_invariants
from .errors import ConfigError, HksimError
from .integrator import SolverConfig, integrate
from .robustness import boundary_curve, is_robust, region_contains, simulate_perturbation, solve_tstar, threshold

_SOLVER_FIELDS = {
    "dt_max": float,
    "event_tol": float,
    "conv_tol": float,
    "t_max": float,
    "boundary_band": float,
    "seed": int,
    "record_every": int,
}


def _fail_config(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _coerce(value, kind, path: str):
    try:
        if kind is float:
            return float(value)
        if kind is int:
            if isinstance(value, float) and value != int(value):
                _fail_config(path, f"expected integer, got {value}")
            return int(value)
        if kind is str:
            if not isinstance(value, str):
                _fail_config(path, f"expected string, got {type(value).__name__}")
            return value
    except (TypeError, ValueError):
        _fail_config(path, f"cannot interpret {value!r} as {kind.__name__}")


def load_run_config(path: str) -> dict:
    """Parse and validate the simulate config; unknown keys are errors."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        _fail_config(path, "config file not found")
    except yaml.YAMLError as err:
        _fail_config(path, f"not valid YAML: {err}")
    if not isinstance(raw, dict):
        _fail_config("<root>", "config must be a mapping")

    allowed_top = {"n", "initial", "policy", "solver", "output"}
    for key in raw:
        if key not in allowed_top:
            _fail_config(key, "unknown key")

    cfg: dict = {"solver": {}, "output": {}}

    initial = raw.get("initial")
    if not isinstance(initial, dict):
        _fail_config("initial", "required mapping with exactly one of 'values' or 'random'")
    for key in initial:
        if key not in {"values", "random"}:
            _fail_config(f"initial.{key}", "unknown key")
    has_values = "values" in initial
    has_random = "random" in initial
    if has_values == has_random:
        _fail_config("initial", "exactly one of 'values' or 'random' is required")

    n = raw.get("n")
    if has_values:
        vals = initial["values"]
        if not isinstance(vals, list) or not vals:
            _fail_config("initial.values", "must be a nonempty list of numbers")
        cfg["x0"] = np.array([_coerce(v, float, f"initial.values[{i}]") for i, v in enumerate(vals)])
        if n is not None and _coerce(n, int, "n") != len(vals):
            _fail_config("n", f"does not match initial.values length {len(vals)}")
    else:
        rnd = initial["random"]
        if not isinstance(rnd, dict):
            _fail_config("initial.random", "must be a mapping {seed, low, high}")
        for key in rnd:
            if key not in {"seed", "low", "high"}:
                _fail_config(f"initial.random.{key}", "unknown key")
        if n is None:
            _fail_config("n", "required with random initial states")
        cfg["random"] = {
            "seed": _coerce(rnd.get("seed", 0), int, "initial.random.seed"),
            "low": _coerce(rnd.get("low", 0.0), float, "initial.random.low"),
            "high": _coerce(rnd.get("high", 1.0), float, "initial.random.high"),
            "n": _coerce(n, int, "n"),
        }
        if cfg["random"]["n"] < 1:
            _fail_config("n", "must be >= 1")

    policy = raw.get("policy", "proper")
    if policy not in ("proper", "sliding", "sampled"):
        _fail_config("policy", f"must be proper|sliding|sampled, got {policy!r}")
    cfg["policy"] = policy

    solver = raw.get("solver", {}) or {}
    if not isinstance(solver, dict):
        _fail_config("solver", "must be a mapping")
    for key, val in solver.items():
        if key not in _SOLVER_FIELDS:
            _fail_config(f"solver.{key}", "unknown key")
        cfg["solver"][key] = _coerce(val, _SOLVER_FIELDS[key], f"solver.{key}")

    output = raw.get("output", {}) or {}
    if not isinstance(output, dict):
        _fail_config("output", "must be a mapping")
    for key, val in output.items():
        if key not in {"dir", "prefix"}:
            _fail_config(f"output.{key}", "unknown key")
        cfg["output"][key] = _coerce(val, str, f"output.{key}")
    return cfg


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip() != ""])
    except ValueError as err:
        raise ConfigError(f"values: not a comma-separated number list: {err}")


def _parse_clusters(text: str) -> np.ndarray:
    """size@value list, e.g. '3@0,3@2.5', expanded to a state vector."""
    out: list[float] = []
    for part in text.split(","):
        try:
            size, value = part.split("@")
            out.extend([float(value)] * int(size))
        except ValueError as err:
            raise ConfigError(f"clusters: expected size@value items: {err}")
    if not out:
        raise ConfigError("clusters: empty spec")
    return np.array(out)


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config)
    policy = os.environ.get("HKSIM_POLICY", args.policy or cfg["policy"])
    solver_kwargs = dict(cfg["solver"])
    seed_env = os.environ.get("HKSIM_SEED")
    if seed_env is not None:
        solver_kwargs["seed"] = int(seed_env)
    elif args.seed is not None:
        solver_kwargs["seed"] = args.seed
    solver_kwargs["policy"] = policy
    try:
        solver = SolverConfig(**solver_kwargs)
    except ValueError as err:
        raise ConfigError(f"solver: {err}")

    if "x0" in cfg:
        x0 = cfg["x0"]
    else:
        rnd = cfg["random"]
        seed = solver_kwargs.get("seed", rnd["seed"]) if seed_env is not None or args.seed is not None else rnd["seed"]
        rng = np.random.default_rng(seed)
        x0 = rng.uniform(rnd["low"], rnd["high"], size=rnd["n"])

    out_dir = os.environ.get("HKSIM_OUT", args.out or cfg["output"].get("dir", "."))
    prefix = cfg["output"].get("prefix", "run")
    os.makedirs(out_dir, exist_ok=True)

    try:
        traj = integrate(x0, solver)
    except HksimError as err:
        print(f"solver error: {err}", file=sys.stderr)
        return 1

    traj.to_csv(os.path.join(out_dir, f"{prefix}_trajectory.csv"))
    traj.events_to_jsonl(os.path.join(out_dir, f"{prefix}_events.jsonl"))
    report = monitor_invariants(traj)
    with open(os.path.join(out_dir, f"{prefix}_invariants.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    print(f"terminal: {traj.terminal}  t_end: {_fmt(traj.final_time)}  residual: {_fmt(f_residual(traj.final_state))}")
    return 0 if report.clean() else 2


def cmd_robustness(args) -> int:
    if (args.values is None) == (args.clusters is None):
        raise ConfigError("robustness: exactly one of --values or --clusters is required")
    x = _parse_vector(args.values) if args.values is not None else _parse_clusters(args.clusters)
    try:
        report = is_robust(x, tol=args.tol)
    except ValueError as err:
        print(f"not an equilibrium: {err}", file=sys.stderr)
        return 1
    text = report.to_json()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "robustness.json"), "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0 if report.overall else 3


def _verify_cell(cell):
    na, nb, gap, x0 = cell
    merged = simulate_perturbation(0.0, gap, na, nb, x0)
    return merged


def cmd_verify(args) -> int:
    na, nb = args.na, args.nb
    gaps = [float(g) for g in args.gaps.split(",") if g.strip() != ""]
    cells = []
    for gap in gaps:
        placements = [0.0 + 1.0, gap - 1.0]
        placements = [p for p in placements if 0.0 < p < gap]
        placements.extend(np.arange(args.grid_step, gap - args.grid_step / 2, args.grid_step))
        placements = sorted(set(round(p, 12) for p in placements))
        for x0 in placements:
            cells.append((na, nb, gap, x0))
    if args.budget is not None:
        cells = cells[: args.budget]

    if cells and args.workers > 1:
        with Pool(args.workers) as pool:
            merged_flags = pool.map(_verify_cell, cells, chunksize=256)
    else:
        merged_flags = [_verify_cell(c) for c in cells]

    out_dir = os.environ.get("HKSIM_OUT", args.out or ".")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"verify_{na}_{nb}.csv")
    d_bar = threshold(na, nb)
    with open(path, "w") as fh:
        fh.write("gap,x0,merged\n")
        merged_by_gap: dict[float, bool] = {}
        for (na_, nb_, gap, x0), merged in zip(cells, merged_flags):
            fh.write(f"{_fmt(gap)},{_fmt(x0)},{int(merged)}\n")
            merged_by_gap[gap] = merged_by_gap.get(gap, False) or merged
        if not cells:
            fh.write("# no data\n")
        else:
            with_w = [g for g, m in merged_by_gap.items() if m]
            without_w = [g for g, m in merged_by_gap.items() if not m]
            max_with = max(with_w) if with_w else None
            min_without = min(without_w) if without_w else None
            consistent = True
            for g, m in merged_by_gap.items():
                if abs(g - d_bar) > 1e-2 and m != (g < d_bar):
                    consistent = False
            fh.write(f"# threshold,{_fmt(d_bar)}\n")
            fh.write(f"# max_gap_with_witness,{_fmt(max_with) if max_with is not None else 'none'}\n")
            fh.write(f"# min_gap_without_witness,{_fmt(min_without) if min_without is not None else 'none'}\n")
            fh.write(f"# frontier_consistent,{str(consistent).lower()}\n")
    print(path)
    return 0


def cmd_region(args) -> int:
    na, nb = args.na, args.nb
    if args.resolution < 2:
        raise ConfigError("region: resolution must be >= 2")
    out_dir = os.environ.get("HKSIM_OUT", args.out or ".")
    os.makedirs(out_dir, exist_ok=True)
    grid_path = os.path.join(out_dir, f"region_grid_{na}_{nb}.csv")
    curve_path = os.path.join(out_dir, f"region_curve_{na}_{nb}.csv")
    axis = np.linspace(0.0, 1.2, args.resolution)
    with open(grid_path, "w") as fh:
        fh.write("x,y,inside\n")
        for y in axis:
            for x in axis:
                fh.write(f"{_fmt(x)},{_fmt(y)},{int(region_contains((x, y), na, nb))}\n")
    with open(curve_path, "w") as fh:
        fh.write("t,x,y\n")
        if na < nb:
            t_star = solve_tstar(na, nb)
            ts = np.linspace(t_star, 0.0, 201) if t_star < 0 else np.array([0.0])
            for t in ts:
                xc, yc = boundary_curve(na, nb, float(t))
                fh.write(f"{_fmt(t)},{_fmt(xc)},{_fmt(yc)}\n")
    print(grid_path)
    print(curve_path)
    return 0


def cmd_check_equilibrium(args) -> int:
    if (args.values is None) == (args.clusters is None):
        raise ConfigError("check-equilibrium: exactly one of --values or --clusters is required")
    x = _parse_vector(args.values) if args.values is not None else _parse_clusters(args.clusters)
    res = f_residual(x)
    weak = is_equilibrium(x, tol=args.tol)
    strong = is_equilibrium(x, tol=args.tol, strong=True)
    print(json.dumps({"residual": res, "weak": weak, "strong": strong}))
    return 0 if weak else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hksim", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="integrate one run from a config file")
    ps.add_argument("--config", required=True)
    ps.add_argument("--out", default=None, help="output directory (overrides config)")
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--policy", choices=("proper", "sliding", "sampled"), default=None)
    ps.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("robustness", help="threshold check of an equilibrium")
    pr.add_argument("--values", default=None, help="comma-separated state vector")
    pr.add_argument("--clusters", default=None, help="size@value list, e.g. 3@0,3@2.5")
    pr.add_argument("--tol", type=float, default=1e-9)
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_robustness)

    pv = sub.add_parser("verify", help="empirical merge table over a gap sweep")
    pv.add_argument("--na", type=int, required=True)
    pv.add_argument("--nb", type=int, required=True)
    pv.add_argument("--gaps", required=True, help="comma-separated gap values")
    pv.add_argument("--grid-step", type=float, default=1e-3)
    pv.add_argument("--budget", type=int, default=None, help="max number of cells")
    pv.add_argument("--workers", type=int, default=1)
    pv.add_argument("--out", default=None)
    pv.set_defaults(func=cmd_verify)

    pg = sub.add_parser("region", help="merge-basin grid and bounding curve")
    pg.add_argument("--na", type=int, required=True)
    pg.add_argument("--nb", type=int, required=True)
    pg.add_argument("--resolution", type=int, default=121)
    pg.add_argument("--out", default=None)
    pg.set_defaults(func=cmd_region)

    pc = sub.add_parser("check-equilibrium", help="residual and weak/strong verdict")
    pc.add_argument("--values", default=None)
    pc.add_argument("--clusters", default=None)
    pc.add_argument("--tol", type=float, default=1e-9)
    pc.set_defaults(func=cmd_check_equilibrium)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 64
    except HksimError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
