"""Scenario fans and scenario trees."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..errors import DimensionError, TreeConsistencyError

STAGE_TOL = 1e-10


@dataclass(frozen=True)
class ScenarioFan:
    """Equally weighted forecast trajectories.

    ``trajectories`` has shape ``(n_scenarios, horizon, W)`` with the
    renewable columns first (``n_renewables`` of them) followed by loads.
    """

    trajectories: np.ndarray
    n_renewables: int
    probabilities: np.ndarray = None

    def __post_init__(self):
        traj = np.array(self.trajectories, dtype=float)
        if traj.ndim != 3 or traj.shape[0] == 0 or traj.shape[1] == 0:
            raise DimensionError(f"fan needs shape (n, horizon, W), got {traj.shape}")
        if not 0 <= self.n_renewables <= traj.shape[2]:
            raise DimensionError("n_renewables exceeds disturbance width")
        if np.any(traj < 0.0):
            raise ValueError("disturbances must be nonnegative")
        if self.probabilities is None:
            probs = np.full(traj.shape[0], 1.0 / traj.shape[0])
        else:
            probs = np.array(self.probabilities, dtype=float).ravel()
            if probs.size != traj.shape[0] or abs(probs.sum() - 1.0) > STAGE_TOL:
                raise TreeConsistencyError("fan probabilities must match scenarios and sum to 1")
        traj.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "trajectories", traj)
        object.__setattr__(self, "probabilities", probs)

    @property
    def n_scenarios(self) -> int:
        return self.trajectories.shape[0]

    @property
    def horizon(self) -> int:
        return self.trajectories.shape[1]

    @property
    def width(self) -> int:
        return self.trajectories.shape[2]

    def mean_path(self) -> np.ndarray:
        return np.einsum("s,stw->tw", self.probabilities, self.trajectories)


@dataclass(frozen=True)
class ScenarioTree:
    """Node-indexed scenario tree.

    Arrays are indexed by node id. The root (node 0) has ``ancestor == -1``
    and a NaN disturbance row because it stands for the measured present.
    """

    stage: np.ndarray
    ancestor: np.ndarray
    probability: np.ndarray
    values: np.ndarray
    n_renewables: int
    _children: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        stage = np.array(self.stage, dtype=int).ravel()
        anc = np.array(self.ancestor, dtype=int).ravel()
        prob = np.array(self.probability, dtype=float).ravel()
        vals = np.array(self.values, dtype=float)
        mu = stage.size
        if mu == 0 or anc.size != mu or prob.size != mu or vals.ndim != 2 or vals.shape[0] != mu:
            raise DimensionError("tree arrays disagree on node count")
        if stage[0] != 0 or anc[0] != -1:
            raise TreeConsistencyError("node 0 must be the root at stage 0")
        if np.any(np.diff(stage) < 0):
            raise TreeConsistencyError("node ids must be ordered by stage")
        if np.any(stage[1:] == 0):
            raise TreeConsistencyError("the root must be the only stage-0 node")
        if np.any(prob <= 0.0):
            raise TreeConsistencyError("node probabilities must be positive")
        children = [[] for _ in range(mu)]
        for i in range(1, mu):
            a = anc[i]
            if not 0 <= a < mu or stage[a] != stage[i] - 1:
                raise TreeConsistencyError(f"node {i} has invalid ancestor {a}")
            children[a].append(i)
        horizon = stage.max()
        for i in range(mu):
            if children[i]:
                mass = prob[children[i]].sum()
                if abs(mass - prob[i]) > STAGE_TOL:
                    raise TreeConsistencyError(f"children of node {i} carry {mass!r}, node has {prob[i]!r}")
            elif stage[i] != horizon:
                raise TreeConsistencyError(f"leaf {i} is not at the final stage {horizon}")
        for j in range(horizon + 1):
            total = prob[stage == j].sum()
            if abs(total - 1.0) > STAGE_TOL:
                raise TreeConsistencyError(f"stage {j} carries probability {total!r}")
        if np.any(vals[1:] < 0.0) or np.any(~np.isfinite(vals[1:])):
            raise ValueError("non-root disturbances must be finite and nonnegative")
        for arr in (stage, anc, prob, vals):
            arr.setflags(write=False)
        object.__setattr__(self, "stage", stage)
        object.__setattr__(self, "ancestor", anc)
        object.__setattr__(self, "probability", prob)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "_children", tuple(tuple(c) for c in children))

    @property
    def n_nodes(self) -> int:
        return self.stage.size

    @property
    def horizon(self) -> int:
        return int(self.stage.max())

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def children(self, i: int) -> tuple:
        return self._children[i]

    def is_leaf(self, i: int) -> bool:
        return not self._children[i]

    def nodes(self, stage: int) -> np.ndarray:
        return np.flatnonzero(self.stage == stage)

    @cached_property
    def non_leaf_nodes(self) -> np.ndarray:
        return np.array([i for i in range(self.n_nodes) if self._children[i]], dtype=int)

    @cached_property
    def leaves(self) -> np.ndarray:
        return self.nodes(self.horizon)

    @property
    def n_scenarios(self) -> int:
        return self.leaves.size

    def path(self, leaf: int) -> list:
        """Node ids from the root to ``leaf``."""
        out = [int(leaf)]
        while out[-1] != 0:
            out.append(int(self.ancestor[out[-1]]))
        return out[::-1]

    def scenario_paths(self) -> np.ndarray:
        """Disturbance trajectories of all scenarios, shape ``(n_leaves, N, W)``."""
        return np.stack([self.values[self.path(leaf)[1:]] for leaf in self.leaves])

    def scenario_probabilities(self) -> np.ndarray:
        return self.probability[self.leaves].copy()


def build_tree(nodes: list, n_renewables: int) -> ScenarioTree:
    """Create a tree from ``(stage, parent_key, probability, value)`` records.

    ``nodes`` is a list of dicts with keys ``key``, ``stage``, ``parent``
    (a key or None for the root), ``probability`` and ``value``. Nodes are
    renumbered stage by stage, keeping the order of the input list inside
    each stage.
    """
    order = sorted(range(len(nodes)), key=lambda i: nodes[i]["stage"])
    new_id = {nodes[i]["key"]: k for k, i in enumerate(order)}
    width = None
    for rec in nodes:
        if rec["value"] is not None:
            width = len(rec["value"])
            break
    width = width or 0
    stage, anc, prob, vals = [], [], [], []
    for i in order:
        rec = nodes[i]
        stage.append(rec["stage"])
        anc.append(-1 if rec["parent"] is None else new_id[rec["parent"]])
        prob.append(rec["probability"])
        vals.append(np.full(width, np.nan) if rec["value"] is None else np.asarray(rec["value"], float))
    return ScenarioTree(np.array(stage), np.array(anc), np.array(prob),
                        np.array(vals).reshape(len(nodes), width), n_renewables)


def chain_tree(path: np.ndarray, n_renewables: int) -> ScenarioTree:
    """Single-scenario tree following ``path`` (shape ``(N, W)``)."""
    path = np.asarray(path, dtype=float)
    n = path.shape[0]
    vals = np.vstack([np.full((1, path.shape[1]), np.nan), path])
    return ScenarioTree(np.arange(n + 1), np.arange(-1, n), np.ones(n + 1), vals, n_renewables)
