"""Coherent risk measures on finite probability spaces.

The production path for the average value-at-risk is the epigraph linear
program ``min t + E[xi]  s.t.  xi >= 0, alpha*xi >= Z - t``; the vertex
enumeration in :func:`avar_dual_oracle` is kept as an independent check.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import CapacityError, DimensionError, DomainError, TreeConsistencyError

PROB_TOL = 1e-10
MAX_ORACLE_OUTCOMES = 12


@dataclass(frozen=True)
class DiscreteDistribution:
    """Strictly positive probability vector, renormalised once on construction."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float).ravel()
        if p.size == 0:
            raise DimensionError("empty probability vector")
        if np.any(~np.isfinite(p)) or np.any(p <= 0.0):
            raise DomainError("probabilities must be finite and strictly positive")
        total = p.sum()
        if abs(total - 1.0) > PROB_TOL:
            raise DomainError(f"probabilities sum to {total!r}, not 1")
        p = p / total
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    def __len__(self):
        return self.probabilities.size

    @classmethod
    def uniform(cls, k: int) -> "DiscreteDistribution":
        return cls(np.full(k, 1.0 / k))


def _as_dist(pi) -> DiscreteDistribution:
    return pi if isinstance(pi, DiscreteDistribution) else DiscreteDistribution(pi)


def _as_cost(Z, pi: DiscreteDistribution | None = None) -> np.ndarray:
    z = np.asarray(Z, dtype=float).ravel()
    if z.size == 0:
        raise DimensionError("empty cost vector")
    if pi is not None and z.size != len(pi):
        raise DimensionError(f"cost has {z.size} outcomes, distribution has {len(pi)}")
    return z


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"risk level alpha={alpha} outside [0, 1]")
    return alpha


def expectation(Z, pi) -> float:
    pi = _as_dist(pi)
    z = _as_cost(Z, pi)
    return float(pi.probabilities @ z)


def worst_case(Z) -> float:
    return float(np.max(_as_cost(Z)))


def avar(Z, pi, alpha: float) -> float:
    """Average value-at-risk of ``Z`` at level ``alpha``.

    ``alpha = 1`` gives the expectation and ``alpha = 0`` the maximum; both
    are returned in closed form. Interior levels solve the epigraph LP over
    ``(t, xi)``.
    """
    pi = _as_dist(pi)
    z = _as_cost(Z, pi)
    alpha = _check_alpha(alpha)
    if alpha == 0.0:
        return worst_case(z)
    if alpha == 1.0:
        return expectation(z, pi)
    k = z.size
    # variables [t, xi_1..xi_k]
    c = np.concatenate(([1.0], pi.probabilities))
    A_ub = np.hstack((-np.ones((k, 1)), -alpha * np.eye(k)))
    b_ub = -z
    bounds = [(None, None)] + [(0.0, None)] * k
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"AV@R linear program failed: {res.message}")
    return float(res.fun)


def avar_dual_oracle(Z, pi, alpha: float) -> float:
    """Worst-case expectation over the vertices of the AV@R ambiguity set.

    Every vertex of ``{p in simplex : p <= pi/alpha}`` has all coordinates
    but at most one at a bound, so enumerating bound patterns is exhaustive.
    Only meant for small outcome counts.
    """
    pi = _as_dist(pi)
    z = _as_cost(Z, pi)
    alpha = _check_alpha(alpha)
    k = z.size
    if k > MAX_ORACLE_OUTCOMES:
        raise CapacityError(f"vertex enumeration limited to {MAX_ORACLE_OUTCOMES} outcomes, got {k}")
    if alpha == 0.0:
        return float(max(z))
    # no coordinate of a probability vector exceeds 1, so capping keeps the polytope
    with np.errstate(over="ignore"):
        cap = np.minimum(pi.probabilities / alpha, 1.0)
    masks = _bound_patterns(k - 1)
    best = -np.inf
    for free in range(k):
        others = np.delete(np.arange(k), free)
        at_cap = masks * cap[others]
        rest = 1.0 - at_cap.sum(axis=1)
        ok = (rest >= -1e-12) & (rest <= cap[free] + 1e-12)
        if not ok.any():
            continue
        values = at_cap[ok] @ z[others] + np.clip(rest[ok], 0.0, cap[free]) * z[free]
        best = max(best, float(values.max()))
    return best


@functools.lru_cache(maxsize=None)
def _bound_patterns(m: int) -> np.ndarray:
    if m == 0:
        return np.zeros((1, 0))
    return np.array(list(itertools.product((0.0, 1.0), repeat=m)))


@dataclass(frozen=True)
class AvarBlock:
    """Linear rows of one node's AV@R epigraph.

    For child ``c`` the rows read ``-xi_c <= 0`` and
    ``hook_c - t - alpha*xi_c <= 0`` where ``hook_c`` is the child's cost
    expression (plus its own risk value for non-leaf children). The node's
    risk value is ``t + sum(weights * xi)``.
    """

    alpha: float
    weights: np.ndarray
    xi_coef: float
    t_coef: float
    hook_coef: float

    @property
    def n_children(self) -> int:
        return self.weights.size


def avar_constraint_block(alpha: float, child_probabilities, parent_probability: float,
                          tol: float = PROB_TOL) -> AvarBlock:
    alpha = _check_alpha(alpha)
    child = np.asarray(child_probabilities, dtype=float).ravel()
    if child.size == 0:
        raise DimensionError("a non-leaf node needs at least one child")
    if np.any(child <= 0.0) or parent_probability <= 0.0:
        raise TreeConsistencyError("node probabilities must be positive")
    if abs(child.sum() - parent_probability) > tol:
        raise TreeConsistencyError(
            f"children carry mass {child.sum()!r} but parent has {parent_probability!r}")
    weights = child / parent_probability
    weights.setflags(write=False)
    return AvarBlock(alpha=alpha, weights=weights, xi_coef=-alpha, t_coef=-1.0, hook_coef=1.0)
