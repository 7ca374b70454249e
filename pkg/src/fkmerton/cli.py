"""Command-line front end.

Subcommands cover the full pipeline: ``solve`` (fixed-point iteration and
its CSV artifacts), ``bounds`` (contraction ledger), ``strategy`` (control
tables), ``simulate`` (wealth paths and the realized objective), ``mc-check``
(Monte Carlo vs PDE probes), and ``report`` (everything bundled into one
JSON plus rendered figures).

Configuration comes from an optional JSON file plus flag overrides; every
run writes a manifest echoing the fully resolved configuration, and a
manifest can be passed back as ``--config`` to reproduce the run.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 a proven-bound check failed (report subcommand only).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from typing import Optional

import numpy as np

from . import __version__, mc, strategy
from .bounds import compute_ledger, optimal_rate, rate_table
from .expr import DomainError, ParseError, parse_expression
from .grid import Grid, GridFunction, sup_distance
from .model import (MarketModel, ModelError, SingularVolatilityError,
                    check_conditions, preset)
from .solver import SolverError, solve_fixed_point

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_INEQUALITY = 3

OUTDIR_ENV = "FKMERTON_OUTDIR"

_NUMERICS_DEFAULTS = {
    "n_t": 201,
    "n_y": [401],
    "box": [[-6.0, 6.0]],
    "tol": 1e-15,
    "n_max": 20,
    "zeta": None,
}
_MC_DEFAULTS = {"paths": 100_000, "step": 1.0 / 2000.0, "seed": 0, "points": 5}
_SIMULATE_DEFAULTS = {
    "x0": 1.0,
    "y0": [0.0],
    "paths": 30_000,
    "step": 1.0 / 250.0,
    "baseline": True,
}


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 1."""


# ----------------------------------------------------------------------
# configuration plumbing


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    # a run manifest wraps the configuration under "config"
    if "config" in data and isinstance(data["config"], dict):
        return data["config"]
    return data


def resolve_config(args) -> dict:
    """Merge defaults, config file, and flag overrides into one dict."""
    cfg = {
        "model": {"preset": "paper-example", "overrides": {}},
        "numerics": dict(_NUMERICS_DEFAULTS),
        "mc": dict(_MC_DEFAULTS),
        "simulate": dict(_SIMULATE_DEFAULTS),
        "output": {"dir": None},
    }
    if getattr(args, "config", None):
        loaded = _load_json(args.config)
        if "model" in loaded:
            # the model section is taken wholesale: merging an inline model
            # into the preset default would leave both forms present
            cfg["model"] = loaded["model"]
        cfg = _merge(cfg, {k: v for k, v in loaded.items() if k != "model"})
    if getattr(args, "preset", None):
        cfg["model"] = {"preset": args.preset,
                        "overrides": cfg["model"].get("overrides", {})}
    for name in ("gamma", "rho", "beta"):
        value = getattr(args, name, None)
        if value is not None:
            if "preset" in cfg["model"]:
                cfg["model"].setdefault("overrides", {})[name] = value
            else:
                cfg["model"][name] = value
    flag_map = {
        "n_t": [("numerics", "n_t")],
        "tol": [("numerics", "tol")],
        "n_max": [("numerics", "n_max")],
        "zeta": [("numerics", "zeta")],
        # path count and step apply to whichever sampler the subcommand runs
        "paths": [("mc", "paths"), ("simulate", "paths")],
        "step": [("mc", "step"), ("simulate", "step")],
        "seed": [("mc", "seed")],
        "points": [("mc", "points")],
        "x0": [("simulate", "x0")],
    }
    for flag, targets in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            for section, key in targets:
                cfg[section][key] = value
    if getattr(args, "n_y", None) is not None:
        cfg["numerics"]["n_y"] = [args.n_y]
    if getattr(args, "box", None) is not None:
        cfg["numerics"]["box"] = [list(args.box)]
    if getattr(args, "out", None):
        cfg["output"]["dir"] = args.out
    return cfg


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def build_model(cfg: dict) -> MarketModel:
    section = cfg.get("model")
    _require(isinstance(section, dict), "model: must be an object")
    if "preset" in section:
        overrides = section.get("overrides", {})
        _require(isinstance(overrides, dict), "model.overrides: must be an object")
        try:
            return preset(section["preset"], **overrides)
        except (ModelError, TypeError, KeyError) as exc:
            raise ConfigError(f"model: {exc}") from exc
    required = ("d", "m", "T", "gamma", "rho", "beta", "r", "mu", "sigma", "F")
    missing = [key for key in required if key not in section]
    _require(not missing, f"model: missing fields {missing} for an inline model")
    try:
        d, m = int(section["d"]), int(section["m"])
        parse = lambda src: parse_expression(str(src), m)  # noqa: E731
        mu = tuple(parse(e) for e in section["mu"])
        sigma = tuple(tuple(parse(e) for e in row) for row in section["sigma"])
        F = tuple(parse(e) for e in section["F"])
        star = section.get("sigma_star")
        star = np.asarray(star, float) if star is not None else np.eye(m, d)
        return MarketModel(d=d, m=m, T=float(section["T"]),
                           gamma=float(section["gamma"]), rho=float(section["rho"]),
                           beta=float(section["beta"]), sigma_star=star,
                           r=parse(section["r"]), mu=mu, sigma=sigma, F=F,
                           name=str(section.get("name", "custom")))
    except (ParseError, ModelError, TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc


def build_grid(model: MarketModel, cfg: dict) -> Grid:
    num = cfg["numerics"]
    try:
        return Grid.build(T=model.T, n_t=int(num["n_t"]),
                          box=[tuple(map(float, pair)) for pair in num["box"]],
                          n_y=[int(n) for n in num["n_y"]])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"numerics: {exc}") from exc


def output_dir(cfg: dict) -> str:
    out = cfg["output"].get("dir") or os.environ.get(OUTDIR_ENV) or "."
    os.makedirs(out, exist_ok=True)
    return out


# ----------------------------------------------------------------------
# artifact helpers


def _fmt(x) -> str:
    value = float(x)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".17g")


def _write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell if isinstance(cell, str) else _fmt(cell)
                             for cell in row])


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)!r}")


def _sanitize(obj):
    """Replace non-finite floats so the JSON stays standard-compliant."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    return obj


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_sanitize(payload), fh, indent=2, default=_json_default)
        fh.write("\n")


def _write_manifest(out: str, command: str, cfg: dict, results: dict,
                    artifacts: list) -> str:
    path = os.path.join(out, "manifest.json")
    _write_json(path, {"tool": "fkmerton", "version": __version__,
                       "command": command, "config": cfg,
                       "artifacts": sorted(artifacts), "results": results})
    return path


def _solve(cfg: dict, threads: int, history: bool):
    model = build_model(cfg)
    grid = build_grid(model, cfg)
    num = cfg["numerics"]
    zeta = num.get("zeta")
    t0 = time.perf_counter()
    result = solve_fixed_point(model, grid, tol=float(num["tol"]),
                               n_max=int(num["n_max"]),
                               zeta=None if zeta is None else float(zeta),
                               keep_history=history,
                               condition_seed=int(cfg["mc"]["seed"]))
    runtime = time.perf_counter() - t0
    return model, grid, result, runtime


def _solve_summary(result, runtime: float) -> dict:
    return {
        "n_done": result.n_done,
        "stopped_by": result.stopped_by,
        "delta_seq": list(result.delta_seq),
        "metric_seq": list(result.metric_seq),
        "residual_sup": result.residual_sup,
        "clamp_counts": list(result.clamp_counts),
        "zeta": result.ledger.zeta,
        "runtime_seconds": round(runtime, 3),
        "conditions": result.report.to_dict() if result.report else None,
    }


def _write_deltas(path: str, result) -> None:
    rows = [(n + 1, d, m) for n, (d, m) in
            enumerate(zip(result.delta_seq, result.metric_seq))]
    _write_csv(path, ["n", "delta", "metric"], rows)


# ----------------------------------------------------------------------
# inequality checks shared by report


def value_gap_rows(result) -> list[dict]:
    """Per-iteration sup gap |h - h_n| + |grad (h - h_n)| vs B* lambda^n."""
    rows = []
    if not result.iterate_history:
        return rows
    final = result.h
    for n, iterate in enumerate(result.iterate_history):
        if n == 0:
            continue  # history[0] is the unit start, bound stated for n >= 1
        gap = sup_distance(final, iterate)
        bound = result.ledger.gap_bound(n)
        rows.append({"n": n, "gap": gap, "bound": bound,
                     "ok": bool(gap <= bound or math.isinf(bound))})
    return rows


def control_gap_rows(result, model: MarketModel) -> list[dict]:
    """Per-iteration control gap vs B1* U*_n at the per-n optimal weight."""
    rows = []
    if not result.iterate_history:
        return rows
    final_field = strategy.optimal_controls(result.h, model)
    base = result.ledger
    for n, iterate in enumerate(result.iterate_history):
        if n == 0:
            continue
        field_n = strategy.optimal_controls(iterate, model)
        gap = strategy.observed_control_gap(final_field, field_n)
        u_star = optimal_rate(n, base)[3]
        bound = base.B1_star * u_star
        rows.append({"n": n, "gap": gap, "bound": bound,
                     "ok": bool(gap <= bound or math.isinf(bound))})
    return rows


# ----------------------------------------------------------------------
# subcommands


def cmd_solve(cfg: dict, threads: int, history: bool) -> int:
    out = output_dir(cfg)
    model, grid, result, runtime = _solve(cfg, threads, history)
    result.h.to_csv(os.path.join(out, "h.csv"))
    _write_deltas(os.path.join(out, "deltas.csv"), result)
    result.residual.to_csv(os.path.join(out, "residual.csv"))
    _write_manifest(out, "solve", cfg, _solve_summary(result, runtime),
                    ["h.csv", "deltas.csv", "residual.csv"])
    print(f"solve: {model.name}: n_done={result.n_done} "
          f"stopped_by={result.stopped_by} residual_sup={result.residual_sup:.3e} "
          f"({runtime:.2f} s) -> {out}")
    return EXIT_OK


def cmd_bounds(cfg: dict, threads: int, history: bool) -> int:
    out = output_dir(cfg)
    model = build_model(cfg)
    num = cfg["numerics"]
    box = [tuple(map(float, pair)) for pair in num["box"]]
    report = check_conditions(model, box, seed=int(cfg["mc"]["seed"]))
    zeta = num.get("zeta")
    if zeta is None:
        provisional = compute_ledger(report, model, zeta=1.0)
        zeta = optimal_rate(int(num["n_max"]), provisional)[1]
    ledger = compute_ledger(report, model, zeta=float(zeta))
    table = rate_table(ledger, int(num["n_max"]))
    payload = {"model": model.name, "conditions": report.to_dict(),
               "ledger": ledger.to_dict(), "rates": table}
    _write_json(os.path.join(out, "ledger.json"), payload)
    _write_csv(os.path.join(out, "ledger.csv"), ["quantity", "value"],
               [(k, v) for k, v in ledger.to_dict().items()
                if isinstance(v, (int, float))])
    _write_manifest(out, "bounds", cfg, {"ledger": ledger.to_dict()},
                    ["ledger.json", "ledger.csv"])
    print(f"bounds: {model.name}: Q*={ledger.Q_star:.6g} r*={ledger.r_star:.6g} "
          f"lambda={ledger.lam:.6g} B*={ledger.B_star:.6g} -> {out}")
    return EXIT_OK


def cmd_strategy(cfg: dict, threads: int, history: bool) -> int:
    out = output_dir(cfg)
    model, grid, result, runtime = _solve(cfg, threads, history)
    field = strategy.optimal_controls(result.h, model)
    header = (["t"] + [f"y{i+1}" for i in range(grid.m)]
              + [f"pi_{j+1}" for j in range(model.d)] + ["c", "a_star"]
              + [f"b_{j+1}" for j in range(model.d)])
    axes = (grid.t,) + grid.ys

    def rows():
        for idx in np.ndindex(*grid.shape):
            coords = [axes[k][idx[k]] for k in range(len(axes))]
            pis = [field.pi[(j,) + idx] for j in range(model.d)]
            bs = [field.b[(j,) + idx] for j in range(model.d)]
            yield coords + pis + [field.c[idx], field.a[idx]] + bs

    _write_csv(os.path.join(out, "strategy.csv"), header, rows())
    _write_manifest(out, "strategy", cfg, _solve_summary(result, runtime),
                    ["strategy.csv"])
    print(f"strategy: {model.name}: controls tabulated on "
          f"{grid.n_t} x {grid.shape[1:]} nodes -> {out}")
    return EXIT_OK


def cmd_simulate(cfg: dict, threads: int, history: bool) -> int:
    out = output_dir(cfg)
    model, grid, result, runtime = _solve(cfg, threads, history)
    field = strategy.optimal_controls(result.h, model)
    sim = cfg["simulate"]
    x0 = float(sim["x0"])
    y0 = [float(v) for v in sim["y0"]]
    paths, step = int(sim["paths"]), float(sim["step"])
    seed = int(cfg["mc"]["seed"])
    summary = strategy.simulate_wealth(field, model, x0, y0, paths, step,
                                       seed, threads=threads)
    rows = []
    for k, t in enumerate(summary.record_times):
        rows.append([t, summary.x_mean[k]]
                    + [summary.x_quantiles[q][k] for q in (5, 25, 50, 75, 95)])
    _write_csv(os.path.join(out, "paths_summary.csv"),
               ["t", "mean", "q05", "q25", "q50", "q75", "q95"], rows)
    payload = {"j_value": summary.j_value, "j_stderr": summary.j_stderr,
               "n_paths": paths, "step": step, "seed": seed,
               "min_x": summary.min_x, "out_of_box": summary.out_of_box}
    if sim.get("baseline", True):
        base_field = strategy.optimal_controls(
            GridFunction.constant(grid, 1.0), model)
        base = strategy.simulate_wealth(base_field, model, x0, y0, paths,
                                        step, seed, threads=threads)
        combined = math.hypot(summary.j_stderr, base.j_stderr)
        payload["baseline"] = {
            "j_value": base.j_value, "j_stderr": base.j_stderr,
            "improvement": summary.j_value - base.j_value,
            "combined_stderr": combined,
            "optimal_not_worse": bool(
                summary.j_value >= base.j_value - 3.0 * combined),
        }
    _write_json(os.path.join(out, "j_estimate.json"), payload)
    _write_manifest(out, "simulate", cfg,
                    {"j": payload, "solve": _solve_summary(result, runtime)},
                    ["paths_summary.csv", "j_estimate.json"])
    print(f"simulate: {model.name}: J = {summary.j_value:.6f} "
          f"+- {summary.j_stderr:.2e} -> {out}")
    return EXIT_OK


def cmd_mc_check(cfg: dict, threads: int, history: bool) -> int:
    out = output_dir(cfg)
    model, grid, result, runtime = _solve(cfg, threads, history)
    mc_cfg = cfg["mc"]
    n_points = int(mc_cfg.get("points", 5))
    probes = mc.DEFAULT_PROBES[:n_points]
    rows = mc.operator_probe_table(result.h, model, probes,
                                   n_paths=int(mc_cfg["paths"]),
                                   step=float(mc_cfg["step"]),
                                   seed=int(mc_cfg["seed"]), threads=threads)
    _write_csv(os.path.join(out, "mc_check.csv"),
               ["t", "y", "pde", "mc", "stderr", "z"],
               [(r["t"], float(r["y"][0]), r["pde"], r["mc"], r["stderr"], r["z"])
                for r in rows])
    worst = max(abs(r["z"]) for r in rows)
    _write_manifest(out, "mc-check", cfg,
                    {"max_abs_z": worst,
                     "rows": [{k: _sanitize(v) for k, v in r.items()} for r in rows]},
                    ["mc_check.csv"])
    print(f"mc-check: {model.name}: max |z| = {worst:.2f} over {len(rows)} "
          f"probe points -> {out}")
    return EXIT_OK


def cmd_report(cfg: dict, threads: int, history: bool) -> int:
    from . import figures

    out = output_dir(cfg)
    model, grid, result, runtime = _solve(cfg, threads, history=True)
    result.h.to_csv(os.path.join(out, "h.csv"))
    _write_deltas(os.path.join(out, "deltas.csv"), result)
    figures.render_h_surface(result.h, os.path.join(out, "h_surface.png"))
    figures.render_delta_curve(result.delta_seq,
                               os.path.join(out, "delta_convergence.png"),
                               metric_seq=result.metric_seq)
    t1 = value_gap_rows(result)
    t3 = control_gap_rows(result, model)
    deltas = result.delta_seq

    def observed(n: int):
        return deltas[n - 1] if len(deltas) >= n else None

    comparison = {
        "delta_5": {"observed": observed(5), "reference_magnitude": 1e-4},
        "delta_8": {"observed": observed(8), "reference_magnitude": 1e-8},
        "delta_14": {"observed": observed(14), "reference_magnitude": 1e-16},
    }
    all_ok = all(r["ok"] for r in t1) and all(r["ok"] for r in t3)
    payload = {
        "model": model.name,
        "solve": _solve_summary(result, runtime),
        "ledger": result.ledger.to_dict(),
        "rates": rate_table(result.ledger, int(cfg["numerics"]["n_max"])),
        "value_gap_check": t1,
        "control_gap_check": t3,
        "inequalities_ok": all_ok,
        "accuracy_milestones": comparison,
    }
    _write_json(os.path.join(out, "report.json"), payload)
    _write_manifest(out, "report", cfg, {"inequalities_ok": all_ok},
                    ["report.json", "h.csv", "deltas.csv", "h_surface.png",
                     "delta_convergence.png"])
    print(f"report: {model.name}: inequalities_ok={all_ok} -> {out}")
    return EXIT_OK if all_ok else EXIT_INEQUALITY


# ----------------------------------------------------------------------
# argument parsing and dispatch


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fkmerton",
        description="Fixed-point solver and diagnostics for the factor-driven "
                    "investment-consumption problem")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "solve": "run the fixed-point iteration and write grid artifacts",
        "bounds": "compute the contraction/bound ledger",
        "strategy": "tabulate the optimal controls",
        "simulate": "simulate wealth under the optimal controls",
        "mc-check": "compare the PDE operator against Monte Carlo probes",
        "report": "bundle diagnostics, inequality checks, and figures",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config or a previous run manifest")
        p.add_argument("--preset",
                       choices=["paper-example", "merton-constant", "two-asset-sv"])
        p.add_argument("--out", help=f"output directory (default ${OUTDIR_ENV} or .)")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--history", action="store_true",
                       help="keep every iterate in memory")
        p.add_argument("--gamma", type=float)
        p.add_argument("--rho", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--n-t", dest="n_t", type=int)
        p.add_argument("--n-y", dest="n_y", type=int)
        p.add_argument("--box", nargs=2, type=float, metavar=("LO", "HI"))
        p.add_argument("--tol", type=float)
        p.add_argument("--n-max", dest="n_max", type=int)
        p.add_argument("--zeta", type=float)
        p.add_argument("--paths", type=int)
        p.add_argument("--step", type=float)
        p.add_argument("--points", type=int)
        p.add_argument("--x0", type=float)
    return parser


_DISPATCH = {
    "solve": cmd_solve,
    "bounds": cmd_bounds,
    "strategy": cmd_strategy,
    "simulate": cmd_simulate,
    "mc-check": cmd_mc_check,
    "report": cmd_report,
}


def main(argv: Optional[list] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        handler = _DISPATCH[args.command]
        return handler(cfg, threads=max(1, args.threads), history=args.history)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, mc.SimulationError, DomainError,
            SingularVolatilityError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
