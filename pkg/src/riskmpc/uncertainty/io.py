"""CSV exchange of fans and trees.

Fan rows: ``scenario,step,w_r,w_d``; tree rows:
``node,stage,ancestor,probability,w_r,w_d`` (root ancestor and values empty).
With several renewables or loads the value columns are numbered
(``w_r_1,w_r_2,...``).
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .tree import ScenarioFan, ScenarioTree


def _value_columns(n_renewables: int, width: int) -> list:
    n_loads = width - n_renewables
    if n_renewables == 1 and n_loads == 1:
        return ["w_r", "w_d"]
    return [f"w_r_{i + 1}" for i in range(n_renewables)] + [f"w_d_{i + 1}" for i in range(n_loads)]


def _n_renewables(header: list) -> int:
    return sum(1 for h in header if h == "w_r" or h.startswith("w_r_"))


def write_fan_csv(fan: ScenarioFan, path) -> None:
    cols = _value_columns(fan.n_renewables, fan.width)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "step"] + cols)
        for s in range(fan.n_scenarios):
            for k in range(fan.horizon):
                writer.writerow([s, k] + [repr(float(x)) for x in fan.trajectories[s, k]])


def read_fan_csv(path) -> ScenarioFan:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    n_r = _n_renewables(header)
    scen = np.array([int(r[0]) for r in rows])
    step = np.array([int(r[1]) for r in rows])
    vals = np.array([[float(x) for x in r[2:]] for r in rows])
    traj = np.empty((scen.max() + 1, step.max() + 1, vals.shape[1]))
    traj[scen, step] = vals
    return ScenarioFan(traj, n_r)


def write_tree_csv(tree: ScenarioTree, path) -> None:
    cols = _value_columns(tree.n_renewables, tree.width)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "stage", "ancestor", "probability"] + cols)
        for i in range(tree.n_nodes):
            anc = "" if i == 0 else int(tree.ancestor[i])
            vals = [""] * tree.width if i == 0 else [repr(float(x)) for x in tree.values[i]]
            writer.writerow([i, int(tree.stage[i]), anc, repr(float(tree.probability[i]))] + vals)


def read_tree_csv(path) -> ScenarioTree:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    rows.sort(key=lambda r: int(r[0]))
    width = len(header) - 4
    stage = [int(r[1]) for r in rows]
    anc = [-1 if r[2] == "" else int(r[2]) for r in rows]
    prob = [float(r[3]) for r in rows]
    vals = [[np.nan if x == "" else float(x) for x in r[4:]] for r in rows]
    return ScenarioTree(np.array(stage), np.array(anc), np.array(prob),
                        np.array(vals).reshape(len(rows), width), _n_renewables(header))


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
