"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 plant failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import BlackoutError, ConfigurationError, PowerFlowDivergence, RiskMPCError
from .mpc import (build_tree_for_step, run_closed_loop, sensitivity_constant_offset,
                  sensitivity_occasional, summarize, write_summary_csv)
from .ocp import ProblemOptions, build_problem, solve
from .uncertainty import kantorovich_distance, read_tree_csv, simulate_fan, write_fan_csv, write_tree_csv

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PLANT = 0, 2, 3, 4


def _out_dir(args, run) -> Path:
    out = Path(args.out or run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    run = cfgmod.load(args.config)
    ctl = run.controller
    if getattr(args, "seed", None) is not None:
        ctl = replace(ctl, seed=args.seed)
    if getattr(args, "alpha", None) is not None:
        ctl = replace(ctl, alpha=args.alpha)
    if getattr(args, "mode", None) is not None and args.command == "simulate":
        ctl = replace(ctl, mode=args.mode)
    return replace(run, controller=ctl)


def _alpha_tag(a: float) -> str:
    return f"alpha_{a:g}"


def cmd_validate(args) -> int:
    doc = cfgmod.read_document(args.config)
    problems = cfgmod.validate(doc)
    if problems:
        for p in problems:
            print(p)
        return EXIT_CONFIG
    print(f"{args.config}: valid")
    return EXIT_OK


def cmd_inspect_tree(args) -> int:
    run = _load(args)
    ctl = run.controller
    world = run.world()
    fan = simulate_fan(run.forecaster, world.history(0), ctl.horizon, ctl.n_fan, [ctl.seed, 3, 0])
    tree = build_tree_for_step(ctl, run.forecaster, world.history(0), 0)
    out = _out_dir(args, run)
    write_fan_csv(fan, out / "fan.csv")
    write_tree_csv(tree, out / "tree.csv")
    print(f"nodes {tree.n_nodes}  scenarios {tree.n_scenarios}  horizon {tree.horizon}")
    for j in range(tree.horizon + 1):
        print(f"stage {j}: {tree.nodes(j).size} nodes, probability {tree.probability[tree.nodes(j)].sum():.12f}")
    print(f"distance to fan {kantorovich_distance(fan, tree):.6g}")
    return EXIT_OK


def cmd_solve_once(args) -> int:
    run = _load(args)
    ctl = run.controller
    if args.tree:
        tree = read_tree_csv(args.tree)
    else:
        tree = build_tree_for_step(ctl, run.forecaster, run.world().history(0), 0)
    problem = build_problem(tree, run.spec, run.weights, ctl.effective_alpha, ctl.x0, ctl.delta0,
                            ProblemOptions(relax_stage=ctl.relax_stage))
    report = solve(problem, options=ctl.solver)
    out = _out_dir(args, run)
    doc = {"status": report.status, "objective": report.value if np.isfinite(report.value) else None,
           "alpha": ctl.effective_alpha, "gap": report.gap if np.isfinite(report.gap) else None,
           "nodes": report.nodes, "wall_time": report.wall_time, "n_binaries": problem.n_binaries}
    if report.ok:
        v = report.root_decision
        doc["root_decision"] = {"u_t": v.u_t.tolist(), "u_s": v.u_s.tolist(), "u_r": v.u_r.tolist(),
                                "delta_t": v.delta_t.tolist()}
        _write_decisions(problem, report, out / "decisions.csv")
    if args.dump:
        (out / "problem.txt").write_text(problem.dump())
    (out / "report.json").write_text(json.dumps(doc, indent=2))
    print(json.dumps(doc))
    return EXIT_OK if report.ok else EXIT_SOLVER


def _write_decisions(problem, report, path) -> None:
    spec, tree = problem.spec, problem.tree
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["node", "stage", "kind", "name", "value"])
        for i in range(tree.n_nodes):
            if not tree.is_leaf(i):
                v = problem.decision(report.x, i)
                for name, arr in (("u_t", v.u_t), ("u_s", v.u_s), ("u_r", v.u_r), ("delta_t", v.delta_t)):
                    for j, val in enumerate(arr):
                        wr.writerow([i, int(tree.stage[i]), "input", f"{name}_{j + 1}", repr(float(val))])
            if i > 0:
                q = problem.auxiliary(report.x, i)
                x = problem.state(report.x, i)
                for name, arr in (("p_t", q.p_t), ("p_s", q.p_s), ("p_r", q.p_r), ("delta_r", q.delta_r),
                                  ("rho", [q.rho]), ("x", x)):
                    for j, val in enumerate(arr):
                        wr.writerow([i, int(tree.stage[i]), "node", f"{name}_{j + 1}", repr(float(val))])


def cmd_simulate(args) -> int:
    run = _load(args)
    ctl = run.controller
    out = _out_dir(args, run)
    if ctl.mode == "certainty-equivalent":
        runs = [("certainty_equivalent", ctl)]
    elif args.alpha is not None or ctl.mode != "risk-averse":
        runs = [(_alpha_tag(ctl.effective_alpha), ctl)]
    else:
        runs = [(_alpha_tag(a), replace(ctl, alpha=a)) for a in run.alphas]
    code = EXIT_OK
    for tag, c in runs:
        world = run.world(noise=run.noise)
        log = run_closed_loop(c, run.spec, run.plant, run.weights, world)
        log.write_csv(out / f"log_{tag}.csv", run.spec)
        if len(log):
            metrics = log.metrics(c.delta0)
            (out / f"metrics_{tag}.json").write_text(json.dumps(metrics, indent=2))
            print(tag, json.dumps(metrics))
        if log.terminal_status != "complete":
            print(f"{tag}: run stopped early ({log.terminal_status}) after {len(log)} steps", file=sys.stderr)
            code = EXIT_PLANT
    return code


def cmd_sensitivity(args) -> int:
    run = _load(args)
    replicas = args.replicas if args.replicas is not None else run.replicas
    mode = args.mode or "constant"
    kw = dict(alphas=run.alphas, replicas=replicas, world_seed=run.controller.seed, workers=run.workers)
    configured = run.noise
    if mode == "constant":
        if configured is not None and configured.event_rate == 1.0:
            kw["noise"] = configured
        rows = sensitivity_constant_offset(run.controller, run.spec, run.plant, run.weights, run.forecaster, **kw)
    elif mode == "occasional":
        if configured is not None and configured.event_rate < 1.0:
            kw.update(noise=configured, event_rate=configured.event_rate)
        rows = sensitivity_occasional(run.controller, run.spec, run.plant, run.weights, run.forecaster, **kw)
    else:
        raise ConfigurationError(f"unknown sensitivity mode '{mode}' (constant|occasional)")
    out = _out_dir(args, run)
    write_summary_csv(rows, out / f"sensitivity_{mode}.csv")
    summary = {f"{a:g}": v for a, v in summarize(rows).items()}
    (out / f"sensitivity_{mode}_summary.json").write_text(json.dumps(summary, indent=2))
    for a, v in summary.items():
        print(f"alpha {a}: mean {v['avg_cost_o']['mean']:.6g} sd {v['avg_cost_o']['sd']:.6g} (avg_cost_o)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskmpc", description="Risk-averse MPC for islanded microgrids")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, alpha=False, mode=False, replicas=False):
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--out", metavar="DIR")
        if alpha:
            p.add_argument("--alpha", type=float, metavar="X")
        if mode:
            p.add_argument("--mode", metavar="M")
        if replicas:
            p.add_argument("--replicas", type=int, metavar="N")

    p = sub.add_parser("validate", help="check a configuration file")
    p.add_argument("--config", required=True, metavar="PATH")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("inspect-tree", help="write the first forecast fan and scenario tree")
    common(p)
    p.set_defaults(func=cmd_inspect_tree)
    p = sub.add_parser("solve-once", help="solve one risk-averse problem")
    common(p, alpha=True)
    p.add_argument("--tree", metavar="CSV", help="scenario tree CSV instead of a generated tree")
    p.add_argument("--dump", action="store_true", help="also write the problem listing")
    p.set_defaults(func=cmd_solve_once)
    p = sub.add_parser("simulate", help="closed-loop simulation")
    common(p, alpha=True, mode=True)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("sensitivity", help="noise sensitivity replicas")
    common(p, mode=True, replicas=True)
    p.set_defaults(func=cmd_sensitivity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlackoutError, PowerFlowDivergence) as exc:
        print(f"plant failure: {exc}", file=sys.stderr)
        return EXIT_PLANT
    except RiskMPCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
