"""Control-oriented hybrid microgrid model.

Unit ordering throughout the package is conventional units, then storage,
then renewables; disturbances are renewable availability followed by loads.
Powers are in pu, energies in pu*h, the sampling time in hours.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import AssemblyError, ConfigurationError, DimensionError, InfeasibleSharingError, TopologyError


def _vec(x, n=None, name="vector"):
    a = np.array(x, dtype=float).ravel()
    if n is not None and a.size != n:
        raise DimensionError(f"{name} has length {a.size}, expected {n}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    b: float
    g: float = 0.0
    p_min: float = -np.inf
    p_max: float = np.inf


@dataclass(frozen=True)
class Network:
    """Bus/line description used for both the DC model and the AC plant."""

    n_buses: int
    lines: tuple
    unit_bus: tuple
    load_bus: tuple
    reference: int
    voltages: np.ndarray = None

    def __post_init__(self):
        v = np.ones(self.n_buses) if self.voltages is None else np.array(self.voltages, float)
        if v.size != self.n_buses or np.any(v <= 0):
            raise ConfigurationError("one positive voltage magnitude per bus required")
        object.__setattr__(self, "voltages", _vec(v))
        for ln in self.lines:
            for b in (ln.from_bus, ln.to_bus):
                if not 0 <= b < self.n_buses:
                    raise TopologyError(f"line endpoint {b} is not a bus")
        if not 0 <= self.reference < self.n_buses:
            raise TopologyError("reference bus out of range")

    @property
    def n_lines(self) -> int:
        return len(self.lines)


@dataclass(frozen=True)
class MicrogridSpec:
    """Static plant description. Power-sharing gains ``chi`` give ``K = diag(1/chi)``."""

    pt_min: np.ndarray
    pt_max: np.ndarray
    ps_min: np.ndarray
    ps_max: np.ndarray
    pr_min: np.ndarray
    pr_max: np.ndarray
    x_max: np.ndarray
    xs_min: np.ndarray
    xs_max: np.ndarray
    chi_t: np.ndarray
    chi_s: np.ndarray
    Ts: float
    n_loads: int = 1
    network: Network | None = None
    F: np.ndarray | None = None
    pe_min: np.ndarray | None = None
    pe_max: np.ndarray | None = None
    x_min: np.ndarray = None
    _flow_cache: list = field(default_factory=list, init=False, repr=False, compare=False)

    def __post_init__(self):
        T = np.size(self.pt_min)
        S = np.size(self.ps_min)
        R = np.size(self.pr_min)
        for name, n in (("pt_min", T), ("pt_max", T), ("chi_t", T), ("ps_min", S), ("ps_max", S),
                        ("chi_s", S), ("x_max", S), ("xs_min", S), ("xs_max", S),
                        ("pr_min", R), ("pr_max", R)):
            object.__setattr__(self, name, _vec(getattr(self, name), n, name))
        object.__setattr__(self, "x_min", _vec(np.zeros(S) if self.x_min is None else self.x_min, S, "x_min"))
        if S < 1:
            raise ConfigurationError("at least one storage unit is required")
        if self.Ts <= 0:
            raise ConfigurationError("sampling time must be positive")
        if np.any(self.chi_t <= 0) or np.any(self.chi_s <= 0):
            raise ConfigurationError("power sharing gains must be positive")
        if np.any(self.ps_min > 0) or np.any(self.ps_max < 0):
            raise ConfigurationError("storage limits must bracket zero")
        if np.any(self.pt_min < 0) or np.any(self.pr_min < 0):
            raise ConfigurationError("conventional and renewable lower limits must be nonnegative")
        if np.any(self.pt_min > self.pt_max) or np.any(self.pr_min > self.pr_max):
            raise ConfigurationError("lower unit limits exceed upper limits")
        if np.any(self.x_min > self.xs_min) or np.any(self.xs_min > self.xs_max) or np.any(self.xs_max > self.x_max):
            raise ConfigurationError("soft storage band must lie inside the storage limits")
        if self.F is not None:
            F = np.array(self.F, dtype=float)
            if F.ndim != 2 or F.shape[1] != self.n_units + self.n_loads:
                raise DimensionError(f"flow matrix must have {self.n_units + self.n_loads} columns")
            F.setflags(write=False)
            object.__setattr__(self, "F", F)
            E = F.shape[0]
            lo = -np.inf * np.ones(E) if self.pe_min is None else self.pe_min
            hi = np.inf * np.ones(E) if self.pe_max is None else self.pe_max
            object.__setattr__(self, "pe_min", _vec(lo, E, "pe_min"))
            object.__setattr__(self, "pe_max", _vec(hi, E, "pe_max"))
        elif self.network is not None:
            net = self.network
            if len(net.unit_bus) != self.n_units or len(net.load_bus) != self.n_loads:
                raise DimensionError("network must place every unit and load on a bus")
            object.__setattr__(self, "pe_min", _vec([ln.p_min for ln in net.lines]))
            object.__setattr__(self, "pe_max", _vec([ln.p_max for ln in net.lines]))
        else:
            object.__setattr__(self, "pe_min", _vec([]))
            object.__setattr__(self, "pe_max", _vec([]))

    T = property(lambda self: self.pt_min.size)
    S = property(lambda self: self.ps_min.size)
    R = property(lambda self: self.pr_min.size)
    D = property(lambda self: self.n_loads)

    @property
    def n_units(self) -> int:
        return self.T + self.S + self.R

    @property
    def single_bus(self) -> bool:
        return self.network is None and self.F is None

    @property
    def Kt(self) -> np.ndarray:
        return 1.0 / self.chi_t

    @property
    def Ks(self) -> np.ndarray:
        return 1.0 / self.chi_s

    @property
    def n_lines(self) -> int:
        return self.pe_min.size


@dataclass(frozen=True)
class ControlInput:
    u_t: np.ndarray
    u_s: np.ndarray
    u_r: np.ndarray
    delta_t: np.ndarray

    def __post_init__(self):
        for name in ("u_t", "u_s", "u_r", "delta_t"):
            object.__setattr__(self, name, _vec(getattr(self, name)))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.u_t, self.u_s, self.u_r, self.delta_t])

    @classmethod
    def from_vector(cls, spec: MicrogridSpec, z) -> "ControlInput":
        T, S, R = spec.T, spec.S, spec.R
        z = np.asarray(z, dtype=float)
        return cls(z[:T], z[T:T + S], z[T + S:T + S + R], z[T + S + R:2 * T + S + R])


@dataclass(frozen=True)
class Disturbance:
    w_r: np.ndarray
    w_d: np.ndarray

    def __post_init__(self):
        for name in ("w_r", "w_d"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        if np.any(self.w_r < 0) or np.any(self.w_d < 0):
            raise ValueError("disturbances must be nonnegative")

    def vector(self) -> np.ndarray:
        return np.concatenate([self.w_r, self.w_d])

    @classmethod
    def from_vector(cls, spec: MicrogridSpec, w) -> "Disturbance":
        w = np.asarray(w, dtype=float)
        return cls(w[:spec.R], w[spec.R:spec.R + spec.D])


@dataclass(frozen=True)
class AuxiliaryVars:
    p_t: np.ndarray
    p_s: np.ndarray
    p_r: np.ndarray
    delta_r: np.ndarray
    rho: float

    def __post_init__(self):
        for name in ("p_t", "p_s", "p_r", "delta_r"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def p(self) -> np.ndarray:
        return np.concatenate([self.p_t, self.p_s, self.p_r])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.p_t, self.p_s, self.p_r, self.delta_r, [self.rho]])

    @classmethod
    def from_vector(cls, spec: MicrogridSpec, z) -> "AuxiliaryVars":
        T, S, R = spec.T, spec.S, spec.R
        z = np.asarray(z, dtype=float)
        return cls(z[:T], z[T:T + S], z[T + S:T + S + R], z[T + S + R:T + S + 2 * R], z[T + S + 2 * R])


@dataclass(frozen=True)
class BigM:
    m_r: float
    M_r: float
    m_t: float
    M_t: float


def big_m_values(spec: MicrogridSpec) -> BigM:
    M_r = float(np.max(spec.pr_max, initial=0.0)) + 1.0
    m_r = float(np.min(spec.pr_min, initial=0.0)) - 1.0
    rho_s = float(np.max(spec.Ks * (spec.ps_max - spec.ps_min)))
    rho_t = float(np.max(spec.Kt * (spec.pt_max - spec.pt_min), initial=0.0))
    M_t = max(rho_s, rho_t) + 1.0
    return BigM(m_r=m_r, M_r=M_r, m_t=-M_t, M_t=M_t)


def flow_matrix(spec: MicrogridSpec) -> np.ndarray:
    """Matrix mapping ``[p; w_d]`` to DC line flows.

    With a bus network the flows are ``diag(b~) A theta`` where ``theta``
    solves the reduced susceptance system with the reference angle at zero,
    ``b~ = -v_i v_j b_ij`` and loads enter as negative injections.
    """
    if spec.F is not None:
        return spec.F
    if spec.network is None:
        return np.concatenate([np.ones(spec.n_units), -np.ones(spec.D)])[None, :]
    if not spec._flow_cache:
        F = _network_flow_matrix(spec)
        F.setflags(write=False)
        spec._flow_cache.append(F)
    return spec._flow_cache[0]


def _network_flow_matrix(spec: MicrogridSpec) -> np.ndarray:
    net = spec.network
    nb, E = net.n_buses, net.n_lines
    A = np.zeros((E, nb))
    bt = np.empty(E)
    for l, ln in enumerate(net.lines):
        A[l, ln.from_bus] = 1.0
        A[l, ln.to_bus] = -1.0
        bt[l] = -net.voltages[ln.from_bus] * net.voltages[ln.to_bus] * ln.b
    adj = csr_matrix((np.ones(E), ([ln.from_bus for ln in net.lines], [ln.to_bus for ln in net.lines])),
                     shape=(nb, nb))
    n_comp, _ = connected_components(adj, directed=False)
    if n_comp != 1:
        raise TopologyError(f"network has {n_comp} disconnected islands")
    keep = [i for i in range(nb) if i != net.reference]
    Bbus = A.T @ np.diag(bt) @ A
    ptdf = np.zeros((E, nb))
    if keep:
        ptdf[:, keep] = np.diag(bt) @ A[:, keep] @ np.linalg.inv(Bbus[np.ix_(keep, keep)])
    cols = [ptdf[:, b] for b in net.unit_bus] + [-ptdf[:, b] for b in net.load_bus]
    return np.column_stack(cols)


def line_flows(spec: MicrogridSpec, p, w_d) -> np.ndarray:
    if spec.single_bus:
        return np.zeros(0)
    return flow_matrix(spec) @ np.concatenate([np.ravel(p), np.ravel(w_d)])


@dataclass(frozen=True)
class ConstraintSystem:
    """Rows of the control-oriented model for one disturbance value.

    ``H2 @ [v; q; w] <= h2`` and ``G @ [v; q; w] == g``. The bilinear
    ``diag(w_r) delta_r`` terms are already evaluated into the ``delta_r``
    columns. ``H2_labels``/``G_labels`` name the block each row stems from.
    """

    B: np.ndarray
    H1: np.ndarray
    h1: np.ndarray
    H2: np.ndarray
    h2: np.ndarray
    G: np.ndarray
    g: np.ndarray
    H2_labels: tuple
    G_labels: tuple
    n_v: int
    n_q: int
    n_w: int

    @property
    def v_cols(self) -> slice:
        return slice(0, self.n_v)

    @property
    def q_cols(self) -> slice:
        return slice(self.n_v, self.n_v + self.n_q)

    @property
    def w_cols(self) -> slice:
        return slice(self.n_v + self.n_q, self.n_v + self.n_q + self.n_w)


class _Rows:
    def __init__(self, width):
        self.width = width
        self.rows, self.rhs, self.labels = [], [], []

    def add(self, label, coeffs: dict, rhs):
        """``coeffs`` maps a column slice start to a coefficient matrix (rows x len)."""
        n = np.size(rhs)
        block = np.zeros((n, self.width))
        for start, mat in coeffs.items():
            mat = np.atleast_2d(np.asarray(mat, dtype=float))
            if mat.shape[0] != n:
                raise AssemblyError(f"{label}: coefficient rows {mat.shape[0]} != rhs rows {n}")
            block[:, start:start + mat.shape[1]] += mat
        self.rows.append(block)
        self.rhs.append(np.ravel(rhs).astype(float))
        self.labels.extend([label] * n)

    def build(self):
        if not self.rows:
            return np.zeros((0, self.width)), np.zeros(0), ()
        return np.vstack(self.rows), np.concatenate(self.rhs), tuple(self.labels)


def assemble_constraints(spec: MicrogridSpec, w: Disturbance) -> ConstraintSystem:
    T, S, R, D = spec.T, spec.S, spec.R, spec.D
    if w.w_r.size != R or w.w_d.size != D:
        raise AssemblyError("disturbance dimensions do not match the microgrid")
    U = T + S + R
    n_v, n_q, n_w = U + T, U + R + 1, R + D
    # column offsets
    ut, us, ur, dt = 0, T, T + S, U
    pt, ps, pr, dr, rho = n_v, n_v + T, n_v + T + S, n_v + U, n_v + U + R
    wr, wd = n_v + n_q, n_v + n_q + R
    width = n_v + n_q + n_w
    I_t, I_s, I_r = np.eye(T), np.eye(S), np.eye(R)
    bm = big_m_values(spec)

    ineq = _Rows(width)
    ineq.add("renewable_power_limits", {pr: np.vstack([I_r, -I_r])}, np.r_[spec.pr_max, -spec.pr_min])
    ineq.add("renewable_setpoint_limits", {ur: np.vstack([I_r, -I_r])}, np.r_[spec.pr_max, -spec.pr_min])
    ineq.add("renewable_min_setpoint", {pr: I_r, ur: -I_r}, np.zeros(R))
    ineq.add("renewable_min_setpoint_lower", {pr: -I_r, ur: I_r, dr: np.diag(w.w_r - bm.M_r)}, np.zeros(R))
    ineq.add("renewable_min_available", {pr: I_r, wr: -I_r}, np.zeros(R))
    ineq.add("renewable_min_available_lower", {pr: -I_r, dr: np.diag(w.w_r - bm.m_r)}, -bm.m_r * np.ones(R))
    if T:
        ineq.add("conventional_power_limits", {pt: np.vstack([-I_t, I_t]),
                                               dt: np.vstack([np.diag(spec.pt_min), -np.diag(spec.pt_max)])},
                 np.zeros(2 * T))
        ineq.add("conventional_setpoint_limits", {ut: np.vstack([-I_t, I_t]),
                                                  dt: np.vstack([np.diag(spec.pt_min), -np.diag(spec.pt_max)])},
                 np.zeros(2 * T))
    ineq.add("storage_power_limits", {ps: np.vstack([I_s, -I_s])}, np.r_[spec.ps_max, -spec.ps_min])
    ineq.add("storage_setpoint_limits", {us: np.vstack([I_s, -I_s])}, np.r_[spec.ps_max, -spec.ps_min])
    if T:
        Kt = np.diag(spec.Kt)
        ones = np.ones((T, 1))
        ineq.add("sharing_conventional_upper", {pt: Kt, ut: -Kt, dt: -bm.M_t * I_t}, np.zeros(T))
        ineq.add("sharing_conventional_lower", {pt: -Kt, ut: Kt, dt: bm.m_t * I_t}, np.zeros(T))
        ineq.add("sharing_conventional_rho_upper", {pt: Kt, ut: -Kt, rho: -ones, dt: -bm.m_t * I_t},
                 -bm.m_t * np.ones(T))
        ineq.add("sharing_conventional_rho_lower", {pt: -Kt, ut: Kt, rho: ones, dt: bm.M_t * I_t},
                 bm.M_t * np.ones(T))
    if not spec.single_bus:
        F = flow_matrix(spec)
        E = F.shape[0]
        Fp, Fd = F[:, :U], F[:, U:]
        finite_hi = np.isfinite(spec.pe_max)
        finite_lo = np.isfinite(spec.pe_min)
        if finite_hi.any():
            ineq.add("line_upper", {pt: Fp[finite_hi], wd: Fd[finite_hi]}, spec.pe_max[finite_hi])
        if finite_lo.any():
            ineq.add("line_lower", {pt: -Fp[finite_lo], wd: -Fd[finite_lo]}, -spec.pe_min[finite_lo])
    H2, h2, H2_labels = ineq.build()

    eq = _Rows(width)
    eq.add("sharing_storage", {ps: np.diag(spec.Ks), us: -np.diag(spec.Ks), rho: -np.ones((S, 1))}, np.zeros(S))
    eq.add("power_balance", {pt: np.ones((1, U)), wd: -np.ones((1, D))}, np.zeros(1))
    G, g, G_labels = eq.build()

    B = np.zeros((S, n_q))
    B[:, T:T + S] = -spec.Ts * I_s
    H1 = np.vstack([I_s, -I_s])
    h1 = np.r_[spec.x_max, -spec.x_min]
    return ConstraintSystem(B, H1, h1, H2, h2, G, g, H2_labels, G_labels, n_v, n_q, n_w)


def forward_q(v: ControlInput, w: Disturbance, spec: MicrogridSpec) -> AuxiliaryVars:
    """Unit powers realised by setpoints ``v`` under disturbance ``w``.

    Renewables deliver ``min(u_r, w_r)``; the remaining imbalance is shared
    by enabled conventional units and all storage units in proportion to
    their gains. Unit limits are not enforced here.
    """
    delta_t = np.asarray(v.delta_t, dtype=float)
    p_r = np.minimum(v.u_r, w.w_r)
    delta_r = (w.w_r <= v.u_r).astype(float)
    gain = float(np.sum(spec.chi_t * delta_t) + np.sum(spec.chi_s))
    if gain <= 0:
        raise InfeasibleSharingError("no grid-forming capacity enabled")
    residual = float(np.sum(w.w_d) - np.sum(p_r) - np.sum(v.u_t * delta_t) - np.sum(v.u_s))
    rho = residual / gain
    # a disabled unit neither follows its setpoint nor shares
    p_t = (v.u_t + rho * spec.chi_t) * delta_t
    p_s = v.u_s + rho * spec.chi_s
    return AuxiliaryVars(p_t, p_s, p_r, delta_r, rho)


def state_update(x, q: AuxiliaryVars, spec: MicrogridSpec) -> np.ndarray:
    return np.asarray(x, dtype=float) - spec.Ts * q.p_s


def row_report(spec: MicrogridSpec, v: ControlInput, q: AuxiliaryVars, w: Disturbance,
               x_next=None, tol: float = 1e-9) -> dict:
    """Satisfaction of each constraint block, keyed by block label."""
    sysm = assemble_constraints(spec, w)
    z = np.concatenate([v.vector(), q.vector(), w.vector()])
    out = {}
    lhs = sysm.H2 @ z - sysm.h2
    for label, val in zip(sysm.H2_labels, lhs):
        out[label] = out.get(label, True) and bool(val <= tol)
    res = sysm.G @ z - sysm.g
    for label, val in zip(sysm.G_labels, res):
        out[label] = out.get(label, True) and bool(abs(val) <= tol)
    if x_next is not None:
        out["storage_energy_limits"] = bool(np.all(sysm.H1 @ np.ravel(x_next) - sysm.h1 <= tol))
    return out
