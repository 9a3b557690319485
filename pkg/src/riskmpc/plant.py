"""Higher-fidelity plant: saturating power sharing, lossy storage, AC power flow."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cost import CostWeights, operating_cost, storage_soft_cost
from .errors import BlackoutError, ConfigurationError, InfeasibleSharingError, PowerFlowDivergence
from .model import AuxiliaryVars, ControlInput, Disturbance, MicrogridSpec, flow_matrix, forward_q

NEWTON_TOL = 1e-9
NEWTON_MAX_ITER = 50
VIOLATION_CLASSES = ("unit", "line", "state")


@dataclass(frozen=True)
class PlantParams:
    eta_c: np.ndarray
    eta_d: np.ndarray
    self_discharge: np.ndarray
    ac: bool = True
    tol: float = 1e-6

    def __post_init__(self):
        for name in ("eta_c", "eta_d", "self_discharge"):
            a = np.array(getattr(self, name), dtype=float).ravel()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any(self.eta_c <= 0) or np.any(self.eta_c > 1) or np.any(self.eta_d <= 0) or np.any(self.eta_d > 1):
            raise ConfigurationError("storage efficiencies must lie in (0, 1]")
        if np.any(self.self_discharge < 0):
            raise ConfigurationError("self-discharge must be nonnegative")

    @classmethod
    def lossless(cls, n_storage: int = 1, ac: bool = False) -> "PlantParams":
        return cls(np.ones(n_storage), np.ones(n_storage), np.zeros(n_storage), ac=ac)


def realize_power(v: ControlInput, w: Disturbance, spec: MicrogridSpec):
    """Power sharing with clamp-and-reshare saturation.

    Returns the realised auxiliaries and a boolean array over the
    grid-forming units (conventional, then storage) marking clamped units.
    """
    q = forward_q(v, w, spec)
    T, S = spec.T, spec.S
    lo = np.concatenate([spec.pt_min * v.delta_t, spec.ps_min])
    hi = np.concatenate([spec.pt_max * v.delta_t, spec.ps_max])
    setp = np.concatenate([v.u_t * v.delta_t, v.u_s])
    chi = np.concatenate([spec.chi_t * v.delta_t, spec.chi_s])
    in_pool = chi > 0
    p = np.concatenate([q.p_t, q.p_s])
    clamped = np.zeros(T + S, dtype=bool)
    demand = float(np.sum(w.w_d) - np.sum(q.p_r))
    rho = q.rho
    for _ in range(T + S + 1):
        over = in_pool & ((p > hi) | (p < lo))
        if not over.any():
            break
        p[over] = np.clip(p[over], lo[over], hi[over])
        clamped |= over
        in_pool &= ~over
        residual = demand - float(np.sum(p[~in_pool]) + np.sum(setp[in_pool]))
        gain = float(np.sum(chi[in_pool]))
        if gain <= 0.0:
            if abs(residual) > 1e-9:
                raise BlackoutError(f"imbalance of {residual:.6g} pu exceeds all grid-forming capacity")
            rho = np.nan
            break
        rho = residual / gain
        p[in_pool] = setp[in_pool] + rho * chi[in_pool]
    return AuxiliaryVars(p[:T], p[T:], q.p_r, q.delta_r, rho), clamped


def _injections(spec: MicrogridSpec, p, w_d) -> np.ndarray:
    net = spec.network
    P = np.zeros(net.n_buses)
    np.add.at(P, list(net.unit_bus), p)
    np.add.at(P, list(net.load_bus), -np.asarray(w_d, dtype=float))
    return P


def _branch_terms(net, theta):
    f = np.array([ln.from_bus for ln in net.lines])
    t = np.array([ln.to_bus for ln in net.lines])
    g = np.array([ln.g for ln in net.lines])
    b = np.array([ln.b for ln in net.lines])
    v = net.voltages
    return f, t, g, b, v


def line_flows_ac(net, theta) -> tuple[np.ndarray, np.ndarray]:
    """Active power leaving each line at its from- and to-bus."""
    f, t, g, b, v = _branch_terms(net, theta)
    d = theta[f] - theta[t]
    out_f = v[f] ** 2 * g - v[f] * v[t] * (g * np.cos(d) + b * np.sin(d))
    out_t = v[t] ** 2 * g - v[f] * v[t] * (g * np.cos(-d) + b * np.sin(-d))
    return out_f, out_t


def bus_power(net, theta) -> np.ndarray:
    f, t, *_ = _branch_terms(net, theta)
    out_f, out_t = line_flows_ac(net, theta)
    P = np.zeros(net.n_buses)
    np.add.at(P, f, out_f)
    np.add.at(P, t, out_t)
    return P


def _jacobian(net, theta) -> np.ndarray:
    f, t, g, b, v = _branch_terms(net, theta)
    d = theta[f] - theta[t]
    k = v[f] * v[t] * (g * np.sin(d) - b * np.cos(d))  # d out_f / d theta_f
    k2 = v[f] * v[t] * (-g * np.sin(d) - b * np.cos(d))  # d out_t / d theta_t
    J = np.zeros((net.n_buses, net.n_buses))
    np.add.at(J, (f, f), k)
    np.add.at(J, (f, t), -k)
    np.add.at(J, (t, t), k2)
    np.add.at(J, (t, f), -k2)
    return J


@dataclass(frozen=True)
class PowerFlowResult:
    angles: np.ndarray
    flows: np.ndarray
    slack_power: float
    mismatch_history: tuple
    iterations: int


def ac_power_flow(injections, net, slack: int) -> PowerFlowResult:
    """Newton-Raphson solve of the bus power balance.

    ``injections`` are net active injections per bus; the entry at ``slack``
    is ignored because that bus balances the losses and carries the zero
    angle reference. Flows are reported at the from-bus of each line.
    """
    P = np.asarray(injections, dtype=float)
    keep = np.array([i for i in range(net.n_buses) if i != slack], dtype=int)
    theta = np.zeros(net.n_buses)
    history = []
    for it in range(NEWTON_MAX_ITER + 1):
        mismatch = bus_power(net, theta)[keep] - P[keep]
        err = float(np.max(np.abs(mismatch), initial=0.0))
        history.append(err)
        if err < NEWTON_TOL:
            out_f, _ = line_flows_ac(net, theta)
            return PowerFlowResult(theta, out_f, float(bus_power(net, theta)[slack]), tuple(history), it)
        if it == NEWTON_MAX_ITER or not np.isfinite(err):
            break
        J = _jacobian(net, theta)[np.ix_(keep, keep)]
        try:
            theta[keep] -= np.linalg.solve(J, mismatch)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowDivergence("singular power-flow Jacobian") from exc
    raise PowerFlowDivergence(f"Newton iteration stalled at mismatch {history[-1]:.3g} pu")


def storage_step(x, p_s, params: PlantParams, Ts: float):
    """Lossy storage update; returns the next state and a depletion flag per unit."""
    x = np.asarray(x, dtype=float)
    p_s = np.asarray(p_s, dtype=float)
    charge = x - Ts * params.eta_c * p_s - params.self_discharge
    discharge = x - Ts * (p_s / params.eta_d) - params.self_discharge
    nxt = np.where(p_s <= 0.0, charge, discharge)
    depleted = nxt < 0.0
    return np.where(depleted, 0.0, nxt), depleted


@dataclass
class PlantStep:
    q: AuxiliaryVars
    flows: np.ndarray
    angles: np.ndarray
    x_next: np.ndarray
    violations: dict
    clamped: np.ndarray
    dc_fallback: bool
    mismatch_history: tuple
    cost_o: float
    cost_s: float

    @property
    def violated_classes(self) -> list:
        return [c for c in VIOLATION_CLASSES if self.violations[c]]


def plant_step(x, v: ControlInput, delta_prev, w: Disturbance, spec: MicrogridSpec, params: PlantParams,
               wts: CostWeights) -> PlantStep:
    tol = params.tol
    try:
        q, clamped = realize_power(v, w, spec)
    except InfeasibleSharingError as exc:
        raise BlackoutError(str(exc)) from exc
    dc_fallback = False
    history: tuple = ()
    angles = np.zeros(0)
    if spec.single_bus:
        flows = np.zeros(0)
    elif params.ac and spec.network is not None:
        net = spec.network
        slack = net.unit_bus[spec.T]
        P = _injections(spec, q.p, w.w_d)
        try:
            pf = ac_power_flow(P, net, slack)
            angles, flows, history = pf.angles, pf.flows, pf.mismatch_history
            # the first storage unit takes up the network losses
            p_s = q.p_s.copy()
            p_s[0] += pf.slack_power - P[slack]
            q = AuxiliaryVars(q.p_t, p_s, q.p_r, q.delta_r, q.rho)
        except PowerFlowDivergence:
            dc_fallback = True
            flows = flow_matrix(spec) @ np.concatenate([q.p, w.w_d])
    else:
        flows = flow_matrix(spec) @ np.concatenate([q.p, w.w_d])
    x_next, depleted = storage_step(x, q.p_s, params, spec.Ts)

    unit = bool(clamped.any())
    unit |= bool(np.any(q.p_t > spec.pt_max * v.delta_t + tol) or np.any(q.p_t < spec.pt_min * v.delta_t - tol))
    unit |= bool(np.any(q.p_s > spec.ps_max + tol) or np.any(q.p_s < spec.ps_min - tol))
    unit |= bool(np.any(q.p_r > spec.pr_max + tol) or np.any(q.p_r < spec.pr_min - tol))
    line = bool(flows.size and (np.any(flows > spec.pe_max + tol) or np.any(flows < spec.pe_min - tol)))
    state = bool(depleted.any() or np.any(x_next > spec.x_max + tol) or np.any(x_next < spec.x_min - tol))
    cost_o = operating_cost(v, delta_prev, q, spec, wts)
    cost_s = storage_soft_cost(x_next, wts)
    return PlantStep(q=q, flows=flows, angles=angles, x_next=x_next,
                     violations={"unit": unit, "line": line, "state": state}, clamped=clamped,
                     dc_fallback=dc_fallback, mismatch_history=history, cost_o=cost_o, cost_s=cost_s)
