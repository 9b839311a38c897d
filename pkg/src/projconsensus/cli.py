"""Command-line experiment runner.

Writes ``trace.csv`` (long form, one row per time and agent) and
``summary.json`` into the output directory. Exit codes: 0 success,
1 invalid configuration, 2 ran but did not converge.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from .analysis import rho_bound
from .async_engine import EventSchedule, async_run, generate_schedule
from .errors import ContractViolation
from .graphs import Digraph, GraphSchedule
from .lsq import TreeTopology, normal_residual, solve_lsq
from .sync_engine import DEFAULT_MAX_STEPS, DEFAULT_TOL, Problem, Trace, generate_problem, run_sync
from .tracking import TimeVaryingProblem, run_tracking

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 1, 2
CSV_HEADER = "t,agent,err,disagreement,residual"


def _fmt(x) -> str:
    return format(float(x), ".17g")


def build_problem(section: dict, seeds: dict[str, int]) -> Problem:
    if "blocks" in section:
        return Problem.from_blocks([b["A"] for b in section["blocks"]], [b["b"] for b in section["blocks"]],
                                   x_star=section.get("x_star"), strict=False)
    if "generator" in section:
        g = section["generator"]
        return generate_problem(g["m"], g["n"], g["block_rows"], seed=g.get("seed", seeds["problem"]),
                                solvable=g.get("solvable", True), rank=g.get("rank"),
                                **({"cond": g["cond"]} if "cond" in g else {}))
    raise ContractViolation("this mode needs a problem with 'blocks' or 'generator'")


def build_time_varying(section: dict) -> tuple[TimeVaryingProblem, np.ndarray | None]:
    if "time_varying" not in section:
        raise ContractViolation("tracking mode needs a 'time_varying' problem")
    tv = section["time_varying"]
    tvp = TimeVaryingProblem.build(tv["A"]["base"], tv["A"]["perturbation"], tv["A"]["frequency"],
                                   tv["b"]["base"], tv["b"]["perturbation"], tv["b"]["frequency"],
                                   tv.get("block_rows"), **({"det_floor": tv["det_floor"]}
                                                            if "det_floor" in tv else {}))
    if "amplitude" in tv:
        tvp = tvp.scaled(tv["amplitude"])
    init = section.get("initial_states")
    return tvp, None if init is None else np.asarray(init, dtype=float)


def _graph(m: int, section) -> Digraph:
    if section == "complete":
        return Digraph.complete(m)
    if section == "ring":
        return Digraph.ring(m)
    if section == "self-loops":
        return Digraph.self_loops(m)
    return Digraph.from_arcs(m, section)


def build_schedule(section: dict | None, m: int, seeds: dict[str, int]) -> GraphSchedule:
    section = section or {"kind": "fixed", "graph": "complete"}
    kind = section["kind"]
    if kind == "fixed":
        return GraphSchedule.fixed(_graph(m, section.get("graph", "complete")))
    if kind == "periodic":
        if "period" not in section:
            raise ContractViolation("periodic schedule needs 'period'")
        return GraphSchedule.periodic([_graph(m, arcs) for arcs in section["period"]])
    return GraphSchedule.seeded_random(m, seed=section.get("seed", seeds["schedule"]), l=section.get("l", 1),
                                       density=section.get("density", 0.2))


def build_events(section: dict | None, m: int, horizon: int, seeds: dict[str, int]) -> EventSchedule:
    section = section or {}
    T = section.get("T", [0.5] * m)
    T_bar = section.get("T_bar", [1.5] * m)
    if "times" in section:
        return EventSchedule.from_times(section["times"], T, T_bar)
    # every agent fires at least once per max(T_bar), so this yields >= horizon merged events
    span = (horizon + 1) * max(T_bar) + max(T_bar)
    return generate_schedule(m, T, T_bar, span, seed=section.get("seed", seeds["events"]))


def write_trace(trace: Trace, path: Path) -> None:
    lines = [CSV_HEADER]
    for rec in trace.steps:
        d, r = _fmt(rec.disagreement), _fmt(rec.residual)
        for i, e in enumerate(rec.per_agent_error):
            lines.append(f"{rec.t},{i},{_fmt(e)},{d},{r}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _num(x):
    return None if x is None else float(x)


def summarize(mode: str, trace: Trace, extra: dict | None = None) -> dict:
    out = {
        "mode": mode,
        "converged": bool(trace.converged),
        "converged_at": trace.converged_at,
        "empirical_rate": _num(trace.empirical_rate),
        "final_residual": float(trace.final.residual),
        "final_disagreement": float(trace.final.disagreement),
    }
    out.update(extra or {})
    return out


def execute(config: dict) -> tuple[Trace, dict]:
    """Run one validated configuration; returns the trace and the summary."""
    mode = config["mode"]
    seeds = cfg.derived_seeds(config.get("seed", cfg.DEFAULT_SEED))
    max_steps = config.get("max_steps", DEFAULT_MAX_STEPS)
    tol = config.get("tol", DEFAULT_TOL)
    problem_section = config.get("problem")
    if problem_section is None:
        raise ContractViolation("configuration has no 'problem'")

    if mode == "tracking":
        tvp, init = build_time_varying(problem_section)
        sched = build_schedule(config.get("schedule"), tvp.m, seeds)
        trace = run_tracking(tvp, sched, config.get("horizon", 300), states=init)
        # tracking has no fixed target; "converged" means the error fell below tol
        err = trace.final.error
        if err <= tol:
            trace.converged = True
            trace.converged_at = next(s.t for s in trace.steps if s.error <= tol)
        return trace, summarize(mode, trace)

    problem = build_problem(problem_section, seeds)
    sched = build_schedule(config.get("schedule"), problem.m, seeds)

    if mode in ("sync", "necessity"):
        trace = run_sync(problem, sched, max_steps=max_steps, tol=tol, seed=seeds["init"])
        return trace, summarize(mode, trace)

    if mode == "rate":
        rate = config.get("rate", {})
        cert = rho_bound(problem.projectors, method=rate.get("method", "exhaustive"),
                         seed=seeds["rate"], samples=rate.get("samples", 10_000))
        trace = run_sync(problem, sched, max_steps=max_steps, tol=tol, seed=seeds["init"])
        return trace, summarize(mode, trace, {"lambda_cert": cert.to_json()})

    if mode == "async":
        horizon = config.get("horizon", 2000)
        events = build_events(config.get("events"), problem.m, horizon, seeds)
        trace = async_run(problem, sched, events, horizon=horizon, tol=tol, seed=seeds["init"])
        return trace, summarize(mode, trace)

    if mode == "lsq":
        tree_section = config.get("tree", "path")
        if tree_section == "path":
            tree = TreeTopology.path(problem.m)
        elif tree_section == "star":
            tree = TreeTopology.star(problem.m)
        else:
            tree = TreeTopology(problem.m, tuple(tuple(e) for e in tree_section))
        x_hat, trace = solve_lsq(problem, tree, sched, max_steps=max_steps, tol=tol, seed=seeds["init"])
        return trace, summarize(mode, trace, {"x_hat": [float(v) for v in x_hat],
                                              "normal_residual": normal_residual(problem, x_hat)})

    raise ContractViolation(f"unknown mode {mode!r}")


def run(config: dict, out_dir: str | Path) -> int:
    """Validate, execute and write outputs; returns the exit code."""
    try:
        cfg.validate(config)
        trace, summary = execute(config)
    except cfg.ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path}: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except (ContractViolation, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out / "trace.csv")
    with open(out / "summary.json", "w", newline="\n") as fh:
        fh.write(json.dumps(summary, indent=2, allow_nan=False) + "\n")
    return EXIT_OK if summary["converged"] or summary["mode"] == "tracking" else EXIT_NOT_CONVERGED


def parse_args(argv=None) -> argparse.Namespace:
    p = argparse.ArgumentParser(prog="projconsensus",
                                description="Run projected-consensus experiments.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="path to a JSON experiment configuration")
    src.add_argument("--recipe", choices=cfg.RECIPES, help="named built-in experiment")
    p.add_argument("--seed", type=int, help="top-level seed (overrides the configuration)")
    p.add_argument("--out", help="output directory (default: the config's \"out\" or ./out)")
    p.add_argument("--max-steps", type=int, help="override max_steps")
    p.add_argument("--tol", type=float, help="override tol")
    return p.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        config = cfg.load(args.config) if args.config else cfg.recipe(args.recipe)
    except cfg.ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path}: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            print("config error at /seed: must be an unsigned 64-bit integer", file=sys.stderr)
            return EXIT_INVALID
        config["seed"] = args.seed
    if args.max_steps is not None:
        config["max_steps"] = args.max_steps
    if args.tol is not None:
        config["tol"] = args.tol
    return run(config, args.out or config.get("out", "out"))


if __name__ == "__main__":
    sys.exit(main())
