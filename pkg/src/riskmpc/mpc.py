"""Receding-horizon operation: forecast, tree, solve, apply, simulate, log."""
from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cost import CostWeights
from .errors import BlackoutError, ConfigurationError, DimensionError
from .model import ControlInput, Disturbance, MicrogridSpec
from .ocp import ClarabelBackend, ProblemOptions, SolverOptions, build_problem, solve
from .plant import VIOLATION_CLASSES, PlantParams, plant_step
from .uncertainty import ForecasterSpec, HelpSpec, chain_tree, inject_help, reduce_to_tree, simulate_fan, simulate_raw

MODES = ("risk-averse", "certainty-equivalent", "worst-case", "risk-neutral")


@dataclass(frozen=True)
class ControllerConfig:
    """Controller settings. ``worst-case`` and ``risk-neutral`` are the risk-averse mode at alpha 0 and 1."""

    mode: str = "risk-averse"
    alpha: float = 0.5
    horizon: int = 4
    branching: tuple = (5, 2, 1, 1)
    help: HelpSpec | None = field(default_factory=HelpSpec)
    relax_stage: int = 4
    solver: SolverOptions = field(default_factory=SolverOptions)
    n_fan: int = 100
    steps: int = 48
    seed: int = 0
    x0: tuple = (3.0,)
    delta0: tuple = (0.0,)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown controller mode '{self.mode}'")
        if self.horizon < 1 or self.steps < 1 or self.n_fan < 1:
            raise ConfigurationError("horizon, steps and fan size must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError("alpha must lie in [0, 1]")
        if self.mode == "risk-averse" and len(self.branching) != self.horizon:
            raise ConfigurationError("one branching limit per horizon step required")
        object.__setattr__(self, "branching", tuple(int(b) for b in self.branching))

    @property
    def effective_alpha(self) -> float:
        return {"worst-case": 0.0, "risk-neutral": 1.0}.get(self.mode, self.alpha)


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian error on the realised raw signals (wind speed in m/s, load in pu).

    The mean offset is active on a step with probability ``event_rate``;
    ``event_rate = 1`` gives a constant offset.
    """

    wind_mean: float = 0.0
    wind_sd: float = 0.0
    load_mean: float = 0.0
    load_sd: float = 0.0
    event_rate: float = 1.0

    def __post_init__(self):
        if self.wind_sd < 0 or self.load_sd < 0:
            raise ConfigurationError("noise standard deviations must be nonnegative")
        if not 0.0 <= self.event_rate <= 1.0:
            raise ConfigurationError("event rate must lie in [0, 1]")

    def sample(self, n_steps: int, n_renewables: int, n_loads: int, seed) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        active = rng.random(n_steps) < self.event_rate if self.event_rate < 1.0 else np.ones(n_steps, bool)
        means = np.array([self.wind_mean] * n_renewables + [self.load_mean] * n_loads)
        sds = np.array([self.wind_sd] * n_renewables + [self.load_sd] * n_loads)
        z = rng.standard_normal((n_steps, n_renewables + n_loads))
        return active[:, None] * means[None, :] + sds[None, :] * z


@dataclass
class SyntheticWorld:
    """Reality drawn from the forecaster's own signal model.

    A sinusoidal pre-history (daily load cycle, constant wind) seeds the
    recursion; the true raw signals for the run are one simulated path. The
    controller sees the noiseless history, the plant sees the realised
    signals including ``noise``.
    """

    forecaster: ForecasterSpec
    steps: int
    seed: int = 0
    noise: NoiseModel | None = None
    noise_seed: int | None = None
    load_amplitude: float = 0.25
    period: int = 48

    def __post_init__(self):
        fs = self.forecaster
        n_pre = max(fs.required_history, 2 * self.period) + 1
        k = np.arange(-n_pre, 0)
        pre = np.empty((n_pre, len(fs.signals)))
        r = fs.n_renewables
        for j, model in enumerate(fs.signals):
            pre[:, j] = model.mean
            if j >= r:
                pre[:, j] += self.load_amplitude * np.sin(2 * np.pi * k / self.period)
        self.prehistory = pre
        self.truth = simulate_raw(fs, pre, self.steps, 1, [self.seed, 7])[0]
        n_load = len(fs.load)
        if self.noise is None:
            self.noise_raw = np.zeros_like(self.truth)
        else:
            nseed = self.seed if self.noise_seed is None else self.noise_seed
            self.noise_raw = self.noise.sample(self.steps, r, n_load, [nseed, 11])

    def history(self, k: int) -> np.ndarray:
        return np.vstack([self.prehistory, self.truth[:k]])

    def realized(self, k: int) -> np.ndarray:
        return self.forecaster.to_disturbance(self.truth[k] + self.noise_raw[k])


@dataclass
class StepRecord:
    k: int
    x: np.ndarray
    v: ControlInput
    w: Disturbance
    p_t: np.ndarray
    p_s: np.ndarray
    p_r: np.ndarray
    rho: float
    flows: np.ndarray
    violations: tuple
    cost_o: float
    cost_s: float
    solve_time: float
    status: str


@dataclass
class TrajectoryLog:
    records: list = field(default_factory=list)
    terminal_status: str = "complete"

    def __len__(self):
        return len(self.records)

    @property
    def cost_o(self) -> np.ndarray:
        return np.array([r.cost_o for r in self.records])

    @property
    def cost_s(self) -> np.ndarray:
        return np.array([r.cost_s for r in self.records])

    def violation_count(self, classes=VIOLATION_CLASSES) -> int:
        return sum(1 for r in self.records for c in r.violations if c in classes)

    def metrics(self, delta0=None) -> dict:
        if not self.records:
            raise DimensionError("empty trajectory log")
        deltas = [np.asarray(delta0, float)] if delta0 is not None else []
        deltas += [r.v.delta_t for r in self.records]
        switches = int(sum(np.sum(np.abs(b - a) > 0.5) for a, b in zip(deltas[:-1], deltas[1:])))
        times = np.array([r.solve_time for r in self.records])
        return {
            "avg_cost_o": float(self.cost_o.mean()),
            "avg_cost_s": float(self.cost_s.mean()),
            "violations": self.violation_count(),
            "violations_by_class": {c: self.violation_count((c,)) for c in VIOLATION_CLASSES},
            "switching_actions": switches,
            "mean_solve_time": float(times.mean()),
            "max_solve_time": float(times.max()),
            "avg_conventional_infeed": float(np.mean([r.p_t.sum() for r in self.records])),
            "avg_renewable_infeed": float(np.mean([r.p_r.sum() for r in self.records])),
            "steps": len(self.records),
            "terminal_status": self.terminal_status,
        }

    # CSV -----------------------------------------------------------------
    @staticmethod
    def _names(base, n):
        return [base] if n == 1 else [f"{base}_{j + 1}" for j in range(n)]

    def header(self, spec: MicrogridSpec) -> list:
        T, S, R, D = spec.T, spec.S, spec.R, spec.D
        E = self.records[0].flows.size if self.records else spec.n_lines
        cols = ["k"] + self._names("x", S) + self._names("u_t", T) + self._names("u_s", S)
        cols += self._names("u_r", R) + self._names("delta_t", T) + self._names("w_r", R) + self._names("w_d", D)
        cols += self._names("p_t", T) + self._names("p_s", S) + self._names("p_r", R) + ["rho"]
        cols += [f"pe_{j + 1}" for j in range(E)]
        cols += ["viol_flags", "cost_o", "cost_s", "solve_time", "status"]
        return cols

    def write_csv(self, path, spec: MicrogridSpec) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.header(spec))
            for r in self.records:
                nums = [r.x, r.v.u_t, r.v.u_s, r.v.u_r, r.v.delta_t, r.w.w_r, r.w.w_d, r.p_t, r.p_s, r.p_r,
                        [r.rho], r.flows]
                row = [r.k] + [repr(float(a)) for arr in nums for a in np.ravel(arr)]
                row += ["|".join(r.violations) or "none", repr(r.cost_o), repr(r.cost_s), repr(r.solve_time),
                        r.status]
                wr.writerow(row)

    @classmethod
    def read_csv(cls, path, spec: MicrogridSpec) -> "TrajectoryLog":
        T, S, R, D = spec.T, spec.S, spec.R, spec.D
        log = cls()
        with Path(path).open(newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            n_lines = sum(1 for h in header if h.startswith("pe_"))
            for row in rd:
                vals = iter(row[1:])
                take = lambda n: np.array([float(next(vals)) for _ in range(n)])
                x = take(S)
                v = ControlInput(take(T), take(S), take(R), take(T))
                w = Disturbance(take(R), take(D))
                p_t, p_s, p_r = take(T), take(S), take(R)
                rho = float(take(1)[0])
                flows = take(n_lines)
                flags = next(vals)
                cost_o, cost_s, st = float(next(vals)), float(next(vals)), float(next(vals))
                status = next(vals)
                log.records.append(StepRecord(int(row[0]), x, v, w, p_t, p_s, p_r, rho, flows,
                                              () if flags == "none" else tuple(flags.split("|")),
                                              cost_o, cost_s, st, status))
        return log


def _fallback_input(spec: MicrogridSpec, previous: ControlInput | None) -> ControlInput:
    if previous is not None:
        return previous
    return ControlInput(spec.pt_min.copy(), np.zeros(spec.S), spec.pr_max.copy(), np.ones(spec.T))


def _shifted_hint(problem, report, new_tree) -> dict:
    """On/off plan of the previous solution along its most probable path, shifted by one stage."""
    tree = problem.tree
    node, plan = 0, []
    while not tree.is_leaf(node):
        plan.append(problem.decision(report.x, node).delta_t)
        kids = tree.children(node)
        node = kids[int(np.argmax(tree.probability[list(kids)]))]
    plan = plan[1:] + plan[-1:]
    hint = {}
    for i in new_tree.non_leaf_nodes:
        s = min(int(new_tree.stage[i]), len(plan) - 1)
        for j, val in enumerate(plan[s]):
            hint[(int(i), j)] = float(val >= 0.5)
    return hint


def build_tree_for_step(config: ControllerConfig, forecaster: ForecasterSpec, history, k: int):
    fan = simulate_fan(forecaster, history, config.horizon, config.n_fan, [config.seed, 3, k])
    if config.mode == "certainty-equivalent":
        return chain_tree(fan.mean_path(), forecaster.n_renewables)
    tree = reduce_to_tree(fan, config.branching)
    if config.help is not None:
        tree = inject_help(tree, fan, config.help)
    return tree


def run_closed_loop(config: ControllerConfig, spec: MicrogridSpec, params: PlantParams, wts: CostWeights,
                    world: SyntheticWorld, backend=None) -> TrajectoryLog:
    backend = backend or ClarabelBackend()
    x = np.array(config.x0, dtype=float)
    delta_prev = np.array(config.delta0, dtype=float)
    opts = ProblemOptions(relax_stage=config.relax_stage)
    log = TrajectoryLog()
    previous_v = None
    hint = None
    for k in range(config.steps):
        tree = build_tree_for_step(config, world.forecaster, world.history(k), k)
        problem = build_problem(tree, spec, wts, config.effective_alpha, x, delta_prev, opts)
        t0 = time.perf_counter()
        report = solve(problem, backend, config.solver, hint)
        solve_time = time.perf_counter() - t0
        if report.ok:
            v = report.root_decision
            status = report.status
            hint = _shifted_hint(problem, report, tree) if report.x is not None else None
        else:
            v = _fallback_input(spec, previous_v)
            status = f"fallback:{report.status}"
            hint = None
        w = Disturbance.from_vector(spec, world.realized(k))
        try:
            step = plant_step(x, v, delta_prev, w, spec, params, wts)
        except BlackoutError:
            log.terminal_status = "blackout"
            break
        log.records.append(StepRecord(k, x.copy(), v, w, step.q.p_t, step.q.p_s, step.q.p_r, step.q.rho,
                                      step.flows, tuple(step.violated_classes), step.cost_o, step.cost_s,
                                      solve_time, status))
        x = step.x_next
        delta_prev = v.delta_t
        previous_v = v
    return log


def diagnose_alpha_ordering(tree, spec, wts, x, delta_prev, alphas=(0.0, 0.5, 1.0), relax_stage: int = 4,
                            solver: SolverOptions | None = None, backend=None) -> list:
    """Optimal values of the same tree at several risk levels (nonincreasing in alpha)."""
    out = []
    for a in alphas:
        prob = build_problem(tree, spec, wts, a, x, delta_prev, ProblemOptions(relax_stage=relax_stage))
        out.append(solve(prob, backend, solver).value)
    return out


# sensitivity harnesses -------------------------------------------------------

CONSTANT_OFFSET = NoiseModel(wind_mean=-0.795, wind_sd=0.53, load_mean=0.048, load_sd=0.032)
OCCASIONAL = NoiseModel(wind_mean=1.589, wind_sd=0.53, load_mean=0.096, load_sd=0.032, event_rate=0.1)


@dataclass(frozen=True)
class SensitivityRow:
    alpha: float
    replica: int
    avg_cost_o: float
    avg_cost_s: float
    violations: int


def _replica(args) -> SensitivityRow:
    config, spec, params, wts, forecaster, noise, alpha, replica, world_seed = args
    cfg = replace(config, mode="risk-averse", alpha=alpha)
    world = SyntheticWorld(forecaster, cfg.steps, world_seed, noise, noise_seed=1000 * world_seed + replica)
    log = run_closed_loop(cfg, spec, params, wts, world)
    m = log.metrics(cfg.delta0)
    return SensitivityRow(alpha, replica, m["avg_cost_o"], m["avg_cost_s"], m["violations"])


def run_sensitivity(config: ControllerConfig, spec, params, wts, forecaster: ForecasterSpec, noise: NoiseModel,
                    alphas=(0.0, 0.5, 1.0), replicas: int = 10, world_seed: int = 0, workers: int = 1) -> list:
    """Closed-loop replicas differing only in the noise realisation; rows sorted by (alpha, replica)."""
    if replicas < 1:
        raise ConfigurationError("replicas must be >= 1")
    jobs = [(config, spec, params, wts, forecaster, noise, float(a), r, world_seed)
            for a in alphas for r in range(replicas)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_replica, jobs))
    else:
        rows = [_replica(j) for j in jobs]
    return sorted(rows, key=lambda r: (r.alpha, r.replica))


def sensitivity_constant_offset(config, spec, params, wts, forecaster, replicas: int = 10,
                                alphas=(0.0, 0.5, 1.0), noise: NoiseModel = CONSTANT_OFFSET, **kw) -> list:
    return run_sensitivity(config, spec, params, wts, forecaster, noise, alphas, replicas, **kw)


def sensitivity_occasional(config, spec, params, wts, forecaster, replicas: int = 10, event_rate: float = 0.1,
                           alphas=(0.0, 0.5, 1.0), noise: NoiseModel = OCCASIONAL, **kw) -> list:
    if not 0.0 < event_rate <= 1.0:
        raise ConfigurationError("event rate must lie in (0, 1]")
    return run_sensitivity(config, spec, params, wts, forecaster, replace(noise, event_rate=event_rate), alphas,
                           replicas, **kw)


def summarize(rows) -> dict:
    """Mean, standard deviation and quartiles of the averaged costs per alpha."""
    out = {}
    for a in sorted({r.alpha for r in rows}):
        sel = [r for r in rows if r.alpha == a]
        entry = {}
        for name in ("avg_cost_o", "avg_cost_s"):
            vals = np.array([getattr(r, name) for r in sel])
            q = np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0])
            entry[name] = {"mean": float(vals.mean()), "sd": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                           "min": q[0], "q1": q[1], "median": q[2], "q3": q[3], "max": q[4]}
        entry["violations"] = int(sum(r.violations for r in sel))
        out[a] = entry
    return out


def write_summary_csv(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["alpha", "replica", "avg_cost_o", "avg_cost_s", "violations"])
        for r in rows:
            wr.writerow([repr(r.alpha), r.replica, repr(r.avg_cost_o), repr(r.avg_cost_s), r.violations])


def read_summary_csv(path) -> list:
    with Path(path).open(newline="") as fh:
        rd = csv.DictReader(fh)
        return [SensitivityRow(float(d["alpha"]), int(d["replica"]), float(d["avg_cost_o"]),
                               float(d["avg_cost_s"]), int(d["violations"])) for d in rd]
