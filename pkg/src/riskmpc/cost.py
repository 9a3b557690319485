"""Stage costs of the operation problem and closed-loop averages."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .model import AuxiliaryVars, ControlInput, MicrogridSpec


@dataclass(frozen=True)
class CostWeights:
    """Weights of the operating cost and the storage soft band.

    ``start``, ``linear`` and ``quadratic`` weigh the conventional units'
    on-state, power and squared power; ``switch`` the squared change of
    their on/off state; ``curtail`` the squared unused renewable capacity;
    ``storage`` the linear violation of ``[soft_min, soft_max]``.
    """

    start: np.ndarray
    linear: np.ndarray
    quadratic: np.ndarray
    switch: np.ndarray
    curtail: np.ndarray
    storage: np.ndarray
    soft_min: np.ndarray
    soft_max: np.ndarray
    discount: float = 0.95

    def __post_init__(self):
        for name in ("start", "linear", "quadratic", "switch", "curtail", "storage", "soft_min", "soft_max"):
            a = np.array(getattr(self, name), dtype=float).ravel()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        for name in ("start", "linear", "quadratic", "switch", "curtail", "storage"):
            if np.any(getattr(self, name) <= 0):
                raise ConfigurationError(f"cost weight '{name}' must be positive")
        if not 0.0 < self.discount < 1.0:
            raise ConfigurationError("discount factor must lie in (0, 1)")
        if np.any(self.soft_min > self.soft_max):
            raise ConfigurationError("soft band lower edge exceeds upper edge")
        t = self.start.size
        if self.linear.size != t or self.quadratic.size != t or self.switch.size != t:
            raise DimensionError("conventional-unit weights must share one length")
        if self.soft_min.size != self.storage.size or self.soft_max.size != self.storage.size:
            raise DimensionError("storage weights and soft band must share one length")

    def check(self, spec: MicrogridSpec) -> None:
        if self.start.size != spec.T or self.curtail.size != spec.R or self.storage.size != spec.S:
            raise DimensionError("cost weights do not match the unit counts of the microgrid")


def running_cost(v: ControlInput, q: AuxiliaryVars, wts: CostWeights) -> float:
    p = q.p_t
    return float(wts.start @ v.delta_t + wts.linear @ p + np.sum((wts.quadratic * p) ** 2))


def switch_cost(delta_now, delta_prev, wts: CostWeights) -> float:
    d_now = np.asarray(delta_now, dtype=float)
    d_prev = np.asarray(delta_prev, dtype=float)
    if d_now.shape != d_prev.shape:
        raise DimensionError("switch states differ in length")
    return float(np.sum((wts.switch * (d_prev - d_now)) ** 2))


def curtailment_cost(q: AuxiliaryVars, spec: MicrogridSpec, wts: CostWeights) -> float:
    return float(np.sum((wts.curtail * (spec.pr_max - q.p_r)) ** 2))


def storage_soft_cost(x, wts: CostWeights) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != wts.storage.shape:
        raise DimensionError("state and storage weights differ in length")
    below = np.maximum(wts.soft_min - x, 0.0)
    above = -np.minimum(wts.soft_max - x, 0.0)
    return float(wts.storage @ (below + above))


def operating_cost(v: ControlInput, delta_prev, q: AuxiliaryVars, spec: MicrogridSpec, wts: CostWeights) -> float:
    """Undiscounted operating part: running + switching + curtailment."""
    return running_cost(v, q, wts) + switch_cost(v.delta_t, delta_prev, wts) + curtailment_cost(q, spec, wts)


def node_cost(stage: int, x_child, v: ControlInput, v_prev_delta, q_child: AuxiliaryVars,
              wts: CostWeights, spec: MicrogridSpec) -> float:
    """Discounted cost attached to a node at ``stage`` reached by input ``v``."""
    if stage < 1:
        raise ValueError("node costs are defined for stage >= 1")
    total = operating_cost(v, v_prev_delta, q_child, spec, wts) + storage_soft_cost(x_child, wts)
    return wts.discount ** stage * total


def average_metrics(log) -> tuple[float, float]:
    """Time averages of the per-step operating and storage costs of a closed-loop log."""
    cost_o = np.asarray(log.cost_o, dtype=float)
    cost_s = np.asarray(log.cost_s, dtype=float)
    if cost_o.size == 0:
        raise DimensionError("empty trajectory log")
    return float(cost_o.mean()), float(cost_s.mean())
