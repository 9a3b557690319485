"""Stage-wise fast-forward reduction of scenario fans into trees, and HELP injection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, DimensionError
from .tree import ScenarioFan, ScenarioTree, build_tree


def fast_forward_select(points: np.ndarray, masses: np.ndarray, k: int) -> list:
    """Greedy forward selection of ``k`` representatives.

    Each round adds the candidate that minimises the mass-weighted distance
    of the unselected points to their closest representative. Ties go to the
    lowest index.
    """
    m = points.shape[0]
    k = min(k, m)
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
    closest = np.full(m, np.inf)
    selected: list = []
    available = np.ones(m, dtype=bool)
    for _ in range(k):
        # cost[u] = sum_j mass_j * min(closest_j, dist[j, u]) over unselected j != u
        reach = np.minimum(closest[:, None], dist)
        weighted = masses[:, None] * reach
        weighted[~available, :] = 0.0
        np.fill_diagonal(weighted, 0.0)
        cost = weighted.sum(axis=0)
        cost[~available] = np.inf
        u = int(np.argmin(cost))
        selected.append(u)
        available[u] = False
        closest = np.minimum(closest, dist[:, u])
    return selected


def _assign(points: np.ndarray, reps: list) -> np.ndarray:
    reps_sorted = sorted(reps)
    d = np.sqrt(((points[:, None, :] - points[reps_sorted][None, :, :]) ** 2).sum(axis=-1))
    owner = np.asarray(reps_sorted)[np.argmin(d, axis=1)]
    owner[reps_sorted] = reps_sorted  # duplicates must not steal a representative
    return owner


def reduce_to_tree(fan: ScenarioFan, branching) -> ScenarioTree:
    """Compress ``fan`` into a tree with at most ``branching[j]`` children per stage-``j`` node.

    At every node the members' remaining trajectories are clustered around
    fast-forward representatives; a child carries its representative's
    disturbance and the total mass of the members assigned to it.
    """
    branching = [int(b) for b in branching]
    n_steps = fan.horizon
    if len(branching) != n_steps:
        raise DimensionError(f"branching has {len(branching)} entries for horizon {n_steps}")
    if any(b < 1 for b in branching):
        raise ConfigurationError("branching limits must be >= 1")
    traj = fan.trajectories
    probs = fan.probabilities
    records = [dict(key=0, stage=0, parent=None, probability=1.0, value=None)]
    frontier = [(0, np.arange(fan.n_scenarios))]
    next_key = 1
    for j in range(n_steps):
        new_frontier = []
        for key, members in frontier:
            seg = traj[members, j:, :].reshape(members.size, -1)
            local = fast_forward_select(seg, probs[members], branching[j])
            owner = _assign(seg, local)
            for rep in sorted(local):
                group = members[owner == rep]
                records.append(dict(key=next_key, stage=j + 1, parent=key,
                                    probability=float(probs[group].sum()),
                                    value=traj[members[rep], j, :]))
                new_frontier.append((next_key, group))
                next_key += 1
        frontier = new_frontier
    return build_tree(records, fan.n_renewables)


def kantorovich_distance(fan: ScenarioFan, tree: ScenarioTree) -> float:
    """Mass-weighted distance from each fan scenario to its nearest tree scenario."""
    if fan.horizon != tree.horizon or fan.width != tree.width:
        raise DimensionError("fan and tree disagree on horizon or disturbance width")
    paths = tree.scenario_paths().reshape(tree.n_scenarios, -1)
    traj = fan.trajectories.reshape(fan.n_scenarios, -1)
    d = np.sqrt(((traj[:, None, :] - paths[None, :, :]) ** 2).sum(axis=-1))
    return float(fan.probabilities @ d.min(axis=1))


@dataclass(frozen=True)
class HelpSpec:
    """Two extreme chains: low renewables with high load, and the reverse."""

    epsilon: float = 1e-3
    low_quantile: float = 0.005
    high_quantile: float = 0.995

    def __post_init__(self):
        if not (0.0 < self.epsilon and 2.0 * self.epsilon < 1.0):
            raise ConfigurationError("HELP mass must satisfy 0 < epsilon < 1/2")
        for q in (self.low_quantile, self.high_quantile):
            if not 0.0 < q < 1.0:
                raise ConfigurationError("HELP quantiles must lie in (0, 1)")


def inject_help(tree: ScenarioTree, fan: ScenarioFan, help: HelpSpec) -> ScenarioTree:
    if fan.horizon != tree.horizon or fan.width != tree.width:
        raise DimensionError("fan and tree disagree on horizon or disturbance width")
    root_children = tree.children(0)
    if 2.0 * help.epsilon >= tree.probability[list(root_children)].min():
        raise ConfigurationError("HELP mass too large for the smallest root branch")
    r = tree.n_renewables
    low = np.quantile(fan.trajectories, help.low_quantile, axis=0, method="linear")
    high = np.quantile(fan.trajectories, help.high_quantile, axis=0, method="linear")
    dry = np.concatenate([low[:, :r], high[:, r:]], axis=1)
    wet = np.concatenate([high[:, :r], low[:, r:]], axis=1)
    scale = 1.0 - 2.0 * help.epsilon
    records = []
    for i in range(tree.n_nodes):
        records.append(dict(key=("t", i), stage=int(tree.stage[i]),
                            parent=None if i == 0 else ("t", int(tree.ancestor[i])),
                            probability=1.0 if i == 0 else tree.probability[i] * scale,
                            value=None if i == 0 else tree.values[i]))
    for tag, chain in (("dry", dry), ("wet", wet)):
        parent = ("t", 0)
        for j in range(tree.horizon):
            key = (tag, j + 1)
            records.append(dict(key=key, stage=j + 1, parent=parent,
                                probability=help.epsilon, value=chain[j]))
            parent = key
    return build_tree(records, tree.n_renewables)
