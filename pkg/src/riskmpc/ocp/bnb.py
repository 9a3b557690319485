"""Best-first branch-and-bound over the binary registry of a problem."""
from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass

import numpy as np

from ..errors import CapacityError
from ..model import ControlInput
from .backend import BackendResult, ClarabelBackend
from .problem import RiskAverseProblem

INT_TOL = 1e-6
MAX_ENUMERATED_BINARIES = 16


@dataclass(frozen=True)
class SolverOptions:
    rel_gap: float = 1e-6
    abs_gap: float = 1e-9
    node_limit: int = 100_000
    time_limit: float | None = None
    heuristics: bool = True


@dataclass
class SolveReport:
    status: str  # optimal | infeasible | gap-limit | node-limit | error
    value: float
    root_decision: ControlInput | None
    binaries: np.ndarray | None
    gap: float
    nodes: int
    wall_time: float
    x: np.ndarray | None = None
    bound: float = -np.inf

    @property
    def ok(self) -> bool:
        return self.x is not None


class _Incumbent:
    def __init__(self, tie_tol: float):
        self.value = np.inf
        self.x = None
        self.assign = None
        self.tie_tol = tie_tol

    def offer(self, value, x, assign) -> bool:
        tol = self.tie_tol * max(1.0, abs(self.value)) if np.isfinite(self.value) else 0.0
        better = value < self.value - tol
        tie = abs(value - self.value) <= tol and tuple(assign) < tuple(self.assign)
        if better or tie:
            self.value, self.x, self.assign = value, x, np.asarray(assign, dtype=float)
            return True
        return False


def _assignment(problem: RiskAverseProblem, x) -> np.ndarray:
    return np.round(np.asarray(x)[problem.binaries]).astype(float)


def rounded_assignment(problem: RiskAverseProblem, x, delta_t_hint: dict | None = None) -> np.ndarray:
    """Binary guess from a relaxed point.

    On/off states are rounded up, since a running unit can always be offset
    by curtailment (or taken from ``delta_t_hint`` keyed by ``(node, unit)``);
    each renewable mode follows whether the parent's setpoint reaches the
    available power of the child.
    """
    x = np.asarray(x)
    spec = problem.spec
    T, S = spec.T, spec.S
    out = np.empty(problem.n_binaries)
    for k, info in enumerate(problem.binary_info):
        col = problem.binaries[k]
        if info.kind == "delta_t":
            if delta_t_hint and (info.node, info.unit) in delta_t_hint:
                out[k] = float(delta_t_hint[(info.node, info.unit)])
            else:
                out[k] = float(x[col] > INT_TOL)
        else:
            parent = int(problem.tree.ancestor[info.node])
            u_r = x[problem.v_idx[parent][T + S + info.unit]]
            w_r = problem.tree.values[info.node][info.unit]
            out[k] = float(w_r <= u_r)
    return out


def _fixed_solve(problem, backend, assign, lb, ub) -> BackendResult:
    lb = lb.copy()
    ub = ub.copy()
    lb[problem.binaries] = assign
    ub[problem.binaries] = assign
    return backend.solve(problem.program, lb, ub)


def _report(problem, status, inc, bound, nodes, t0) -> SolveReport:
    if inc.x is None:
        return SolveReport(status, np.inf if status == "infeasible" else np.nan, None, None,
                           np.inf, nodes, time.perf_counter() - t0, None, bound)
    gap = max(0.0, inc.value - bound) / max(abs(inc.value), 1e-9) if np.isfinite(bound) else np.inf
    return SolveReport(status, inc.value, problem.decision(inc.x, 0), inc.assign.copy(), gap, nodes,
                       time.perf_counter() - t0, inc.x, bound)


def solve(problem: RiskAverseProblem, backend=None, options: SolverOptions | None = None,
          delta_t_hint: dict | None = None) -> SolveReport:
    """Branch-and-bound with lowest-bound node selection and most-fractional branching.

    ``delta_t_hint`` seeds a warm-start incumbent, for instance the previous
    step's on/off plan shifted by one stage.
    """
    backend = backend or ClarabelBackend()
    options = options or SolverOptions()
    t0 = time.perf_counter()
    prog = problem.program
    inc = _Incumbent(tie_tol=1e-12)
    nodes = 0
    counter = itertools.count()
    heap = [(-np.inf, next(counter), prog.lb.copy(), prog.ub.copy())]
    best_bound = -np.inf
    tried = set()
    results = {}
    is_t = np.array([b.kind == "delta_t" for b in problem.binary_info], dtype=bool)

    def try_assignment(assign, lb, ub):
        key = tuple(assign)
        if key in tried:
            return
        tried.add(key)
        res = _fixed_solve(problem, backend, assign, lb, ub)
        results[key] = res.value if res.status == "optimal" else np.inf
        if res.status == "optimal":
            inc.offer(res.value, res.x, assign)

    def dive(x, lb, ub, hint):
        """Fix the on/off states, then the renewable modes implied by the setpoints; return the value found."""
        xb = np.asarray(x)[problem.binaries]
        guess = rounded_assignment(problem, x, hint)
        cols = problem.binaries
        fixed = lb[cols] == ub[cols]
        guess[fixed] = lb[cols][fixed]
        if np.any(is_t) and np.any(np.abs(xb[is_t] - guess[is_t]) > INT_TOL):
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[cols[is_t]] = ub2[cols[is_t]] = guess[is_t]
            res = backend.solve(prog, lb2, ub2)
            if res.status != "optimal":
                return np.inf
            guess = rounded_assignment(problem, res.x, hint)
            guess[fixed] = lb[cols][fixed]
        try_assignment(guess, lb, ub)
        key = tuple(guess)
        return results.get(key, np.inf)

    def prunable(bound):
        if inc.x is None:
            return False
        return bound >= inc.value - max(options.abs_gap, options.rel_gap * abs(inc.value))

    status = "optimal"
    while heap:
        bound, _, lb, ub = heapq.heappop(heap)
        best_bound = min([bound] + [h[0] for h in heap])
        if prunable(bound):
            continue
        if nodes >= options.node_limit:
            heapq.heappush(heap, (bound, next(counter), lb, ub))
            status = "node-limit"
            break
        if options.time_limit is not None and time.perf_counter() - t0 > options.time_limit:
            heapq.heappush(heap, (bound, next(counter), lb, ub))
            status = "gap-limit"
            break
        nodes += 1
        res = backend.solve(prog, lb, ub)
        if res.status == "infeasible":
            continue
        if res.status != "optimal":
            if nodes == 1:
                return _report(problem, "error", inc, -np.inf, nodes, t0)
            continue
        if prunable(res.value):
            continue
        xb = res.x[problem.binaries]
        frac = np.abs(xb - np.round(xb))
        if problem.n_binaries == 0 or frac.max() <= INT_TOL:
            assign = _assignment(problem, res.x)
            if frac.max(initial=0.0) == 0.0:
                inc.offer(res.value, res.x, assign)
            else:
                try_assignment(assign, lb, ub)
            continue
        if options.heuristics:
            hint = delta_t_hint if nodes == 1 else None
            val = dive(res.x, lb, ub, hint)
            if nodes == 1 and hint:
                val = min(val, dive(res.x, lb, ub, None))
            if np.isfinite(val) and val <= res.value + max(options.abs_gap, options.rel_gap * abs(val)):
                continue  # the subtree's bound is attained
        # most fractional, on/off states before renewable modes, ties to the lowest index
        score = np.round(0.5 - np.abs(xb - np.floor(xb) - 0.5), 12)
        t_frac = is_t & (score > INT_TOL)
        if t_frac.any():
            score = np.where(t_frac, score, -1.0)
        k = int(np.argmax(score))
        col = problem.binaries[k]
        for val in (0.0, 1.0):
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[col] = ub2[col] = val
            heapq.heappush(heap, (res.value, next(counter), lb2, ub2))
    if not heap:
        best_bound = inc.value if inc.x is not None else np.inf
    else:
        best_bound = min(h[0] for h in heap)
        if inc.x is not None:
            best_bound = min(best_bound, inc.value)
    if inc.x is None:
        return _report(problem, "infeasible" if status == "optimal" else status, inc, best_bound, nodes, t0)
    return _report(problem, status, inc, best_bound, nodes, t0)


def enumerate_binaries_solve(problem: RiskAverseProblem, backend=None) -> SolveReport:
    """Solve the convex program for every binary assignment and keep the best."""
    backend = backend or ClarabelBackend()
    nb = problem.n_binaries
    if nb > MAX_ENUMERATED_BINARIES:
        raise CapacityError(f"{nb} binaries exceed the enumeration limit of {MAX_ENUMERATED_BINARIES}")
    t0 = time.perf_counter()
    inc = _Incumbent(tie_tol=1e-12)
    count = 0
    for bits in itertools.product((0.0, 1.0), repeat=nb):
        count += 1
        res = _fixed_solve(problem, backend, np.array(bits), problem.program.lb, problem.program.ub)
        if res.status == "optimal":
            inc.offer(res.value, res.x, np.array(bits))
    status = "optimal" if inc.x is not None else "infeasible"
    return _report(problem, status, inc, inc.value, count, t0)
