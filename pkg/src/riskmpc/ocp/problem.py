"""Assembly of the risk-averse operation problem on a scenario tree.

Variables per non-leaf node ``i``: the input ``v(i) = [u_t, u_s, u_r, delta_t]``
and the AV@R threshold ``t(i)``. Variables per non-root node ``c``: the state
``x(c)``, auxiliaries ``q(c) = [p_t, p_s, p_r, delta_r, rho]``, the AV@R excess
``xi(c)``, an epigraph scalar ``e(c)`` bounding the quadratic part of the
stage cost, and two slacks splitting the storage soft-band penalty.

With ``Z(c)`` the discounted cost of node ``c`` and
``Psi(c) = t(c) + sum_{g in child(c)} pi(g)/pi(c) * xi(g)``, the risk rows read

    xi(c) >= 0,   alpha * xi(c) >= Z(c) + Psi(c) - t(i)      (Psi omitted at leaves)

and the objective is ``Psi(0)``; this is the nested AV@R of the tree costs.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..cost import CostWeights
from ..errors import AssemblyError, DimensionError
from ..model import AuxiliaryVars, ControlInput, Disturbance, MicrogridSpec, assemble_constraints
from ..risk import avar_constraint_block
from ..uncertainty.tree import ScenarioTree
from .backend import ConvexProgram, QuadraticRow

FORMULATIONS = ("risk", "expected", "minmax")


@dataclass(frozen=True)
class ProblemOptions:
    """``relax_stage``: conventional on/off states at nodes of this stage or later are relaxed to [0, 1]."""

    relax_stage: int = 4
    formulation: str = "risk"

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise AssemblyError(f"unknown formulation '{self.formulation}'")
        if self.relax_stage < 0:
            raise AssemblyError("relax_stage must be nonnegative")


class _Rows:
    """COO accumulator for sparse constraint rows."""

    def __init__(self):
        self.r, self.c, self.v, self.b = [], [], [], []

    def add(self, cols, vals, rhs):
        row = len(self.b)
        for j, a in zip(cols, vals):
            if a != 0.0:
                self.r.append(row)
                self.c.append(int(j))
                self.v.append(float(a))
        self.b.append(float(rhs))

    def add_block(self, cols, mat, rhs):
        cols = np.asarray(cols)
        base = len(self.b)
        rr, cc = np.nonzero(mat)
        self.r.extend((rr + base).tolist())
        self.c.extend(cols[cc].tolist())
        self.v.extend(mat[rr, cc].tolist())
        self.b.extend(np.asarray(rhs, dtype=float).tolist())

    def build(self, n):
        A = sp.csr_matrix((self.v, (self.r, self.c)), shape=(len(self.b), n))
        return A, np.array(self.b, dtype=float)


@dataclass(frozen=True)
class BinaryInfo:
    kind: str  # delta_t | delta_r
    node: int
    unit: int


@dataclass
class RiskAverseProblem:
    tree: ScenarioTree
    spec: MicrogridSpec
    wts: CostWeights
    alpha: float
    x0: np.ndarray
    delta_prev: np.ndarray
    options: ProblemOptions
    program: ConvexProgram
    v_idx: dict
    t_idx: dict
    x_idx: dict
    q_idx: dict
    xi_idx: dict
    e_idx: dict
    slack_idx: dict
    cost_rows: dict
    binaries: np.ndarray
    binary_info: tuple
    names: list = field(repr=False, default_factory=list)

    @property
    def n_binaries(self) -> int:
        return self.binaries.size

    def decision(self, x, node: int) -> ControlInput:
        return ControlInput.from_vector(self.spec, np.asarray(x)[self.v_idx[node]])

    def auxiliary(self, x, node: int) -> AuxiliaryVars:
        return AuxiliaryVars.from_vector(self.spec, np.asarray(x)[self.q_idx[node]])

    def state(self, x, node: int) -> np.ndarray:
        if node == 0:
            return self.x0.copy()
        return np.asarray(x)[self.x_idx[node]].copy()

    def node_cost_values(self, x) -> np.ndarray:
        """Discounted node costs ``Z`` evaluated at ``x`` (NaN at the root)."""
        x = np.asarray(x)
        out = np.full(self.tree.n_nodes, np.nan)
        for c, (cols, vals) in self.cost_rows.items():
            out[c] = float(vals @ x[cols])
        return out

    def disturbance(self, node: int) -> Disturbance:
        return Disturbance.from_vector(self.spec, self.tree.values[node])

    def dump(self, stream=None) -> str:
        """Plain-text listing of the program, one item per line.

        Lines are ``var <j> <name> <lb> <ub> <C|B>``, ``obj <const> <j>:<coef> ...``,
        ``eq <j>:<coef> ... = <rhs>``, ``le <j>:<coef> ... <= <rhs>`` and
        ``quad <k> lin <j>:<coef> ... <= <beta>`` followed by the squared
        norm terms ``sq <k> <const> <j>:<coef> ...``.
        """
        prog = self.program
        out = io.StringIO() if stream is None else stream
        binset = set(int(b) for b in self.binaries)
        for j in range(prog.n):
            kind = "B" if j in binset else "C"
            out.write(f"var {j} {self.names[j]} {prog.lb[j]!r} {prog.ub[j]!r} {kind}\n")
        terms = " ".join(f"{j}:{prog.c[j]!r}" for j in np.flatnonzero(prog.c))
        out.write(f"obj {prog.offset!r} {terms}\n")

        def rows(A, b, tag, sense):
            A = sp.csr_matrix(A)
            for k in range(A.shape[0]):
                lo, hi = A.indptr[k], A.indptr[k + 1]
                terms = " ".join(f"{j}:{v!r}" for j, v in zip(A.indices[lo:hi], A.data[lo:hi]))
                out.write(f"{tag} {terms} {sense} {b[k]!r}\n")

        rows(prog.A_eq, prog.b_eq, "eq", "=")
        rows(prog.A_ub, prog.b_ub, "le", "<=")
        for k, q in enumerate(prog.quad):
            terms = " ".join(f"{j}:{q.a[j]!r}" for j in np.flatnonzero(q.a))
            out.write(f"quad {k} lin {terms} <= {q.beta!r}\n")
            M = sp.csr_matrix(q.M)
            for r in range(M.shape[0]):
                lo, hi = M.indptr[r], M.indptr[r + 1]
                terms = " ".join(f"{j}:{v!r}" for j, v in zip(M.indices[lo:hi], M.data[lo:hi]))
                out.write(f"sq {k} {q.m[r]!r} {terms}\n")
        return out.getvalue() if stream is None else ""


class _Alloc:
    def __init__(self):
        self.names: list = []
        self.lb: list = []
        self.ub: list = []

    def take(self, labels, lb=-np.inf, ub=np.inf) -> np.ndarray:
        start = len(self.names)
        labels = list(labels)
        self.names += labels
        self.lb += list(np.broadcast_to(np.asarray(lb, dtype=float), (len(labels),)))
        self.ub += list(np.broadcast_to(np.asarray(ub, dtype=float), (len(labels),)))
        return np.arange(start, start + len(labels))


def build_problem(tree: ScenarioTree, spec: MicrogridSpec, wts: CostWeights, alpha: float, x0,
                  delta_prev, options: ProblemOptions | None = None) -> RiskAverseProblem:
    options = options or ProblemOptions()
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise AssemblyError(f"risk level {alpha} outside [0, 1]")
    T, S, R, D = spec.T, spec.S, spec.R, spec.D
    U = T + S + R
    wts.check(spec)
    if tree.width != R + D or tree.n_renewables != R:
        raise DimensionError("tree disturbances do not match the microgrid")
    x0 = np.array(x0, dtype=float).ravel()
    delta_prev = np.array(delta_prev, dtype=float).ravel()
    if x0.size != S or delta_prev.size != T:
        raise DimensionError("initial state or previous switch state has the wrong length")

    al = _Alloc()
    v_idx, t_idx, x_idx, q_idx, xi_idx, e_idx, slack_idx = {}, {}, {}, {}, {}, {}, {}
    binaries, binary_info = [], []
    vnames = [f"u_t{j}" for j in range(T)] + [f"u_s{j}" for j in range(S)] + [f"u_r{j}" for j in range(R)]
    qnames = ([f"p_t{j}" for j in range(T)] + [f"p_s{j}" for j in range(S)] + [f"p_r{j}" for j in range(R)]
              + [f"delta_r{j}" for j in range(R)] + ["rho"])
    risk_vars = options.formulation == "risk"
    for i in range(tree.n_nodes):
        if not tree.is_leaf(i):
            idx = al.take([f"{n}@{i}" for n in vnames])
            dt = al.take([f"delta_t{j}@{i}" for j in range(T)], 0.0, 1.0)
            v_idx[i] = np.concatenate([idx, dt])
            if tree.stage[i] < options.relax_stage:
                for j, col in enumerate(dt):
                    binaries.append(int(col))
                    binary_info.append(BinaryInfo("delta_t", i, j))
            t_idx[i] = al.take([f"t@{i}"], *((-np.inf, np.inf) if risk_vars else (0.0, 0.0)))[0]
        if i == 0:
            continue
        x_idx[i] = al.take([f"x{j}@{i}" for j in range(S)], spec.x_min, spec.x_max)
        lo = np.full(U + R + 1, -np.inf)
        hi = np.full(U + R + 1, np.inf)
        lo[U:U + R], hi[U:U + R] = 0.0, 1.0
        q_idx[i] = al.take([f"{n}@{i}" for n in qnames], lo, hi)
        for j in range(R):
            binaries.append(int(q_idx[i][U + j]))
            binary_info.append(BinaryInfo("delta_r", i, j))
        xi_idx[i] = al.take([f"xi@{i}"], *((0.0, np.inf) if risk_vars else (0.0, 0.0)))[0]
        e_idx[i] = al.take([f"e@{i}"], 0.0, np.inf)[0]
        slack_idx[i] = (al.take([f"s_lo{j}@{i}" for j in range(S)], 0.0, np.inf),
                        al.take([f"s_hi{j}@{i}" for j in range(S)], 0.0, np.inf))
    tau = al.take(["tau"])[0] if options.formulation == "minmax" else None
    n = len(al.names)

    eq, ub = _Rows(), _Rows()
    quad = []
    cost_rows = {}
    pt_off, ps_off, pr_off = 0, T, T + S
    for c in range(1, tree.n_nodes):
        i = int(tree.ancestor[c])
        w = Disturbance.from_vector(spec, tree.values[c])
        sysm = assemble_constraints(spec, w)
        nvq = sysm.n_v + sysm.n_q
        cols = np.concatenate([v_idx[i], q_idx[c]])
        wv = w.vector()
        ub.add_block(cols, sysm.H2[:, :nvq], sysm.h2 - sysm.H2[:, nvq:] @ wv)
        eq.add_block(cols, sysm.G[:, :nvq], sysm.g - sysm.G[:, nvq:] @ wv)
        # x(c) = x(i) + B q(c)
        for j in range(S):
            bcols = [x_idx[c][j]] + list(q_idx[c])
            bvals = [1.0] + list(-sysm.B[j])
            if i == 0:
                eq.add(bcols, bvals, x0[j])
            else:
                eq.add(bcols + [x_idx[i][j]], bvals + [-1.0], 0.0)
        s_lo, s_hi = slack_idx[c]
        for j in range(S):
            ub.add([s_lo[j], x_idx[c][j]], [-1.0, -1.0], -wts.soft_min[j])
            ub.add([s_hi[j], x_idx[c][j]], [-1.0, 1.0], wts.soft_max[j])
        # e(c) >= ||qd p_t||^2 + ||sw (delta_prev - delta)||^2 + ||cr (pr_max - p_r)||^2
        dt_i = v_idx[i][U:U + T]
        m = np.zeros(2 * T + R)
        Mr, Mc, Mv = [], [], []
        for j in range(T):
            Mr.append(j), Mc.append(q_idx[c][pt_off + j]), Mv.append(wts.quadratic[j])
            Mr.append(T + j), Mc.append(dt_i[j]), Mv.append(-wts.switch[j])
            if i == 0:
                m[T + j] = wts.switch[j] * delta_prev[j]
            else:
                Mr.append(T + j), Mc.append(v_idx[int(tree.ancestor[i])][U + j]), Mv.append(wts.switch[j])
        for j in range(R):
            Mr.append(2 * T + j), Mc.append(q_idx[c][pr_off + j]), Mv.append(-wts.curtail[j])
            m[2 * T + j] = wts.curtail[j] * spec.pr_max[j]
        a = np.zeros(n)
        a[e_idx[c]] = -1.0
        quad.append(QuadraticRow(sp.csr_matrix((Mv, (Mr, Mc)), shape=(2 * T + R, n)), m, a, 0.0))
        g = wts.discount ** int(tree.stage[c])
        ccols = np.concatenate([dt_i, q_idx[c][pt_off:pt_off + T], [e_idx[c]], s_lo, s_hi])
        cvals = g * np.concatenate([wts.start, wts.linear, [1.0], wts.storage, wts.storage])
        cost_rows[c] = (ccols, cvals)

    c_obj = np.zeros(n)
    if options.formulation == "risk":
        root_block = None
        for i in tree.non_leaf_nodes:
            kids = tree.children(i)
            block = avar_constraint_block(alpha, tree.probability[list(kids)], tree.probability[i])
            if i == 0:
                root_block = block
            for c, wgt in zip(kids, block.weights):
                cols = list(cost_rows[c][0]) + [t_idx[i], xi_idx[c]]
                vals = list(block.hook_coef * cost_rows[c][1]) + [block.t_coef, block.xi_coef]
                if not tree.is_leaf(c):
                    sub = avar_constraint_block(alpha, tree.probability[list(tree.children(c))],
                                                tree.probability[c])
                    cols += [t_idx[c]] + [xi_idx[g] for g in tree.children(c)]
                    vals += [block.hook_coef] + list(block.hook_coef * sub.weights)
                ub.add(cols, vals, 0.0)
        c_obj[t_idx[0]] = 1.0
        for c, wgt in zip(tree.children(0), root_block.weights):
            c_obj[xi_idx[c]] += wgt
    elif options.formulation == "expected":
        for c, (cols, vals) in cost_rows.items():
            np.add.at(c_obj, cols, tree.probability[c] * vals)
    else:
        for leaf in tree.leaves:
            cols, vals = [tau], [-1.0]
            for node in tree.path(int(leaf))[1:]:
                cols += list(cost_rows[node][0])
                vals += list(cost_rows[node][1])
            ub.add(cols, vals, 0.0)
        c_obj[tau] = 1.0

    A_eq, b_eq = eq.build(n)
    A_ub, b_ub = ub.build(n)
    order = np.argsort(binaries, kind="stable")
    binaries = np.asarray(binaries, dtype=int)[order]
    binary_info = tuple(binary_info[k] for k in order)
    prog = ConvexProgram(c=c_obj, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, quad=tuple(quad),
                         lb=np.array(al.lb), ub=np.array(al.ub), binaries=binaries)
    return RiskAverseProblem(tree=tree, spec=spec, wts=wts, alpha=alpha, x0=x0, delta_prev=delta_prev,
                             options=options, program=prog, v_idx=v_idx, t_idx=t_idx, x_idx=x_idx,
                             q_idx=q_idx, xi_idx=xi_idx, e_idx=e_idx, slack_idx=slack_idx,
                             cost_rows=cost_rows, binaries=binaries, binary_info=binary_info,
                             names=al.names)
