"""Independent reference computations used only by the tests."""
import itertools

import numpy as np
from scipy.optimize import minimize_scalar


def avar_scalar(Z, pi, alpha: float) -> float:
    """``min_t t + E[(Z - t)+] / alpha`` by a dense grid on [min Z, max Z] and a bounded refine."""
    with np.errstate(all="ignore"):
        return _avar_scalar(Z, pi, alpha)


def _avar_scalar(Z, pi, alpha: float) -> float:
    Z = np.asarray(Z, float)
    pi = np.asarray(pi, float)
    if alpha == 0.0:
        return float(Z.max())
    f = lambda t: t + pi @ np.maximum(Z - t, 0.0) / alpha
    lo, hi = Z.min(), Z.max()
    if hi - lo < 1e-15:
        return float(f(lo))
    grid = np.linspace(lo, hi, 2001)
    vals = grid + pi @ np.maximum(Z[:, None] - grid[None, :], 0.0) / alpha
    # the objective is piecewise linear with kinks at the outcomes
    cands = list(grid[[int(np.argmin(vals))]]) + list(Z)
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": 1e-13})
    return float(min(min(f(t) for t in cands), res.fun))


def nested_by_paths_max(tree, Z) -> float:
    """Worst scenario path sum, computed by enumerating root-to-leaf paths."""
    return max(sum(Z[n] for n in tree.path(leaf)[1:]) for leaf in tree.leaves)


def nested_by_expectation(tree, Z) -> float:
    return float(sum(tree.probability[i] * Z[i] for i in range(1, tree.n_nodes)))


def brute_force_box_min(f, lo, hi, n: int = 401) -> float:
    return float(min(f(x) for x in np.linspace(lo, hi, n)))


def bit_patterns(n: int):
    return [np.array(b, float) for b in itertools.product((0, 1), repeat=n)]
