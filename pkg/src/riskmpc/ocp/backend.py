"""Convex subproblem contract and solver adapters.

A :class:`ConvexProgram` is

    minimise    c'x + 0.5 x'Px + offset
    subject to  A_eq x == b_eq
                A_ub x <= b_ub
                ||M_k x + m_k||^2 + a_k'x <= beta_k     for every quadratic row k
                lb <= x <= ub

Variables whose bounds coincide are substituted out before the solver sees
the problem, which is how branch-and-bound fixes binaries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

FEAS_TOL = 1e-7


@dataclass(frozen=True)
class QuadraticRow:
    M: sp.csr_matrix
    m: np.ndarray
    a: np.ndarray
    beta: float


@dataclass(frozen=True)
class ConvexProgram:
    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    quad: tuple
    lb: np.ndarray
    ub: np.ndarray
    P: sp.csc_matrix | None = None
    offset: float = 0.0
    binaries: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def n(self) -> int:
        return self.c.size

    @cached_property
    def soc_data(self):
        """Second-order-cone rows ``(A, b, sizes)`` with ``b - A x`` in the cones."""
        blocks, rhs, sizes = [], [], []
        for row in self.quad:
            a = sp.csr_matrix(np.asarray(row.a, dtype=float).reshape(1, -1))
            blocks += [a, a, -2.0 * sp.csr_matrix(row.M)]
            rhs += [[row.beta + 1.0], [row.beta - 1.0], 2.0 * np.asarray(row.m, dtype=float)]
            sizes.append(2 + row.M.shape[0])
        if not blocks:
            return sp.csr_matrix((0, self.n)), np.zeros(0), []
        return sp.vstack(blocks, format="csr"), np.concatenate([np.ravel(r) for r in rhs]), sizes

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        val = float(self.c @ x) + self.offset
        if self.P is not None:
            val += 0.5 * float(x @ (self.P @ x))
        return val

    def max_violation(self, x, lb=None, ub=None) -> float:
        x = np.asarray(x, dtype=float)
        lb = self.lb if lb is None else lb
        ub = self.ub if ub is None else ub
        parts = [0.0]
        if self.A_eq.shape[0]:
            parts.append(np.max(np.abs(self.A_eq @ x - self.b_eq)))
        if self.A_ub.shape[0]:
            parts.append(np.max(self.A_ub @ x - self.b_ub))
        for row in self.quad:
            r = row.M @ x + row.m
            parts.append(float(r @ r + np.dot(row.a, x) - row.beta))
        with np.errstate(invalid="ignore"):
            parts.append(np.max(np.where(np.isfinite(lb), lb - x, 0.0), initial=0.0))
            parts.append(np.max(np.where(np.isfinite(ub), x - ub, 0.0), initial=0.0))
        return float(max(parts))


@dataclass(frozen=True)
class BackendResult:
    status: str  # optimal | infeasible | error
    value: float
    x: np.ndarray | None
    max_violation: float = np.inf


class ClarabelBackend:
    """Interior-point conic backend built on Clarabel."""

    def __init__(self, tol: float = 1e-9, max_iter: int = 200, verbose: bool = False):
        self.tol = tol
        self.max_iter = max_iter
        self.verbose = verbose

    def _settings(self):
        import clarabel

        s = clarabel.DefaultSettings()
        s.verbose = self.verbose
        s.max_iter = self.max_iter
        s.tol_gap_abs = self.tol
        s.tol_gap_rel = self.tol
        s.tol_feas = self.tol
        s.tol_infeas_abs = self.tol
        s.tol_infeas_rel = self.tol
        s.tol_ktratio = 1e-7
        return s

    def solve(self, prog: ConvexProgram, lb=None, ub=None) -> BackendResult:
        import clarabel

        lb = prog.lb if lb is None else np.asarray(lb, dtype=float)
        ub = prog.ub if ub is None else np.asarray(ub, dtype=float)
        if np.any(lb > ub):
            return BackendResult("infeasible", np.inf, None)
        fixed = lb == ub
        free = np.flatnonzero(~fixed)
        x_fix = np.where(fixed, lb, 0.0)
        n_free = free.size

        def restrict(A, b):
            A = sp.csr_matrix(A)
            return A[:, free], b - A @ x_fix

        A_eq, b_eq = restrict(prog.A_eq, prog.b_eq)
        A_ub, b_ub = restrict(prog.A_ub, prog.b_ub)
        A_soc, b_soc, soc_sizes = prog.soc_data
        A_soc, b_soc = restrict(A_soc, b_soc)

        lo, hi = lb[free], ub[free]
        has_lo, has_hi = np.isfinite(lo), np.isfinite(hi)
        eye = sp.identity(n_free, format="csr")
        A_bnd = sp.vstack([eye[has_hi], -eye[has_lo]], format="csr")
        b_bnd = np.concatenate([hi[has_hi], -lo[has_lo]])

        c = prog.c[free].astype(float)
        offset = prog.offset + float(prog.c @ x_fix)
        if prog.P is not None:
            P = sp.csc_matrix(prog.P)
            c = c + (P @ x_fix)[free]
            offset += 0.5 * float(x_fix @ (P @ x_fix))
            P_free = sp.triu(P[free][:, free], format="csc")
        else:
            P_free = sp.csc_matrix((n_free, n_free))

        if n_free == 0:
            x = x_fix.copy()
            viol = prog.max_violation(x, lb, ub)
            if viol > FEAS_TOL:
                return BackendResult("infeasible", np.inf, None, viol)
            return BackendResult("optimal", prog.objective(x), x, viol)

        A = sp.vstack([A_eq, A_ub, A_bnd, A_soc], format="csc")
        b = np.concatenate([b_eq, b_ub, b_bnd, b_soc])
        cones = []
        if A_eq.shape[0]:
            cones.append(clarabel.ZeroConeT(A_eq.shape[0]))
        n_nn = A_ub.shape[0] + A_bnd.shape[0]
        if n_nn:
            cones.append(clarabel.NonnegativeConeT(n_nn))
        cones += [clarabel.SecondOrderConeT(k) for k in soc_sizes]
        if not cones:
            # unconstrained linear objective: bounded only if c vanishes
            if np.any(c != 0.0):
                return BackendResult("error", -np.inf, None)
            x = x_fix.copy()
            return BackendResult("optimal", prog.objective(x), x, 0.0)
        sol = clarabel.DefaultSolver(P_free, c, A, b, cones, self._settings()).solve()
        status = str(sol.status)
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return BackendResult("infeasible", np.inf, None)
        if status not in ("Solved", "AlmostSolved"):
            return BackendResult("error", np.nan, None)
        x = x_fix.copy()
        x[free] = np.asarray(sol.x)
        viol = prog.max_violation(x, lb, ub)
        if viol > FEAS_TOL:
            return BackendResult("error", np.nan, x, viol)
        return BackendResult("optimal", prog.objective(x), x, viol)


class CvxpyBackend:
    """Second route through cvxpy's modelling layer; used for cross-checks."""

    def __init__(self, solver: str | None = None, **solver_kwargs):
        self.solver = solver
        self.solver_kwargs = solver_kwargs

    def solve(self, prog: ConvexProgram, lb=None, ub=None) -> BackendResult:
        import cvxpy as cp

        lb = prog.lb if lb is None else np.asarray(lb, dtype=float)
        ub = prog.ub if ub is None else np.asarray(ub, dtype=float)
        x = cp.Variable(prog.n)
        obj = prog.c @ x + prog.offset
        if prog.P is not None:
            obj = obj + 0.5 * cp.quad_form(x, cp.psd_wrap(sp.csc_matrix(prog.P)))
        cons = []
        if prog.A_eq.shape[0]:
            cons.append(prog.A_eq @ x == prog.b_eq)
        if prog.A_ub.shape[0]:
            cons.append(prog.A_ub @ x <= prog.b_ub)
        for row in prog.quad:
            cons.append(cp.sum_squares(row.M @ x + row.m) + np.asarray(row.a) @ x <= row.beta)
        fin_lo, fin_hi = np.flatnonzero(np.isfinite(lb)), np.flatnonzero(np.isfinite(ub))
        if fin_lo.size:
            cons.append(x[fin_lo] >= lb[fin_lo])
        if fin_hi.size:
            cons.append(x[fin_hi] <= ub[fin_hi])
        problem = cp.Problem(cp.Minimize(obj), cons)
        problem.solve(solver=self.solver, **self.solver_kwargs)
        if problem.status in ("infeasible", "infeasible_inaccurate"):
            return BackendResult("infeasible", np.inf, None)
        if problem.status not in ("optimal", "optimal_inaccurate") or x.value is None:
            return BackendResult("error", np.nan, None)
        xv = np.asarray(x.value, dtype=float)
        return BackendResult("optimal", prog.objective(xv), xv, prog.max_violation(xv, lb, ub))
