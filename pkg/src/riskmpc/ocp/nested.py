"""Direct evaluation of the nested AV@R of tree costs, used as an oracle."""
from __future__ import annotations

import numpy as np

from ..cost import node_cost
from ..errors import DimensionError
from ..model import forward_q, row_report, state_update
from ..risk import avar
from ..uncertainty.tree import ScenarioTree


def evaluate_nested_risk(tree: ScenarioTree, Z, alpha: float) -> float:
    """Backward recursion ``Phi(i) = AV@R over child(i) of Z(c) + Phi(c)`` with conditional weights."""
    Z = np.asarray(Z, dtype=float).ravel()
    if Z.size != tree.n_nodes or np.any(~np.isfinite(Z[1:])):
        raise DimensionError("a finite cost is required for every non-root node")
    phi = np.zeros(tree.n_nodes)
    for i in tree.non_leaf_nodes[::-1]:
        kids = list(tree.children(i))
        weights = tree.probability[kids] / tree.probability[i]
        weights = weights / weights.sum()
        phi[i] = avar(Z[kids] + phi[kids], weights, alpha)
    return float(phi[0])


def induced_node_costs(problem, decisions: dict, tol: float = 1e-7):
    """Node costs produced by per-node inputs through the forward model.

    ``decisions`` maps every non-leaf node to a ``ControlInput``. Returns the
    cost vector (NaN at the root) and whether every model row, including the
    storage bounds, holds.
    """
    tree, spec, wts = problem.tree, problem.spec, problem.wts
    Z = np.full(tree.n_nodes, np.nan)
    states = {0: problem.x0}
    feasible = True
    for c in range(1, tree.n_nodes):
        i = int(tree.ancestor[c])
        v = decisions[i]
        w = problem.disturbance(c)
        q = forward_q(v, w, spec)
        x = state_update(states[i], q, spec)
        states[c] = x
        if not all(row_report(spec, v, q, w, x, tol).values()):
            feasible = False
        prev = problem.delta_prev if i == 0 else decisions[int(tree.ancestor[i])].delta_t
        Z[c] = node_cost(int(tree.stage[c]), x, v, prev, q, wts, spec)
    return Z, feasible
