import numpy as np
import pytest

from riskmpc.config import load_shipped
from riskmpc.cost import CostWeights
from riskmpc.model import Disturbance, Line, MicrogridSpec, Network, assemble_constraints
from riskmpc.ocp import ProblemOptions, build_problem
from riskmpc.uncertainty import ScenarioFan, build_tree


def case_network(g: float = 2.0, limit: float = 1.3) -> Network:
    line = lambda f, t: Line(f, t, -20.0, g, -limit, limit)
    return Network(4, (line(0, 3), line(2, 1), line(1, 3), line(2, 3)), (0, 1, 2), (3,), 3)


def case_spec(network: Network | None = None, **kw) -> MicrogridSpec:
    args = dict(pt_min=[0.4], pt_max=[1.0], ps_min=[-1.0], ps_max=[1.0], pr_min=[0.0], pr_max=[2.0],
                x_max=[7.0], xs_min=[0.5], xs_max=[6.5], chi_t=[1.0], chi_s=[1.0], Ts=0.5)
    args.update(kw)
    return MicrogridSpec(network=network, **args)


def case_weights(**kw) -> CostWeights:
    args = dict(start=[0.1178], linear=[0.751], quadratic=[0.0693], switch=[0.1], curtail=[1.0],
                storage=[3000.0], soft_min=[0.5], soft_max=[6.5], discount=0.95)
    args.update(kw)
    return CostWeights(**args)


def no_renewable_spec() -> tuple:
    spec = case_spec(pr_min=[], pr_max=[])
    return spec, case_weights(curtail=[])


def random_tree(rng, shape, width: int, n_renewables: int, low=0.0, high=1.5):
    """Tree whose stage-``j`` nodes have ``shape[j][k]`` children, random masses and values."""
    records = [dict(key=0, stage=0, parent=None, probability=1.0, value=None)]
    frontier = [(0, 1.0)]
    key = 1
    for j, counts in enumerate(shape):
        new = []
        for (parent, mass), n_kids in zip(frontier, counts):
            split = rng.dirichlet(np.ones(n_kids)) * mass if n_kids > 1 else np.array([mass])
            split = np.maximum(split, 1e-3 * mass)
            split *= mass / split.sum()
            for m in split:
                records.append(dict(key=key, stage=j + 1, parent=parent, probability=float(m),
                                    value=rng.uniform(low, high, width)))
                new.append((key, float(m)))
                key += 1
        frontier = new
    return build_tree(records, n_renewables)


def random_fan(rng, n: int, horizon: int, width: int = 2) -> ScenarioFan:
    base = rng.uniform(0.3, 1.5, width)
    steps = rng.normal(0.0, 0.2, size=(n, horizon, width)).cumsum(axis=1)
    return ScenarioFan(np.clip(base + steps, 0.0, None), width - 1)


RENEWABLE_SHAPES = ([[1], [1]],)
LOAD_ONLY_SHAPES = ([[2], [1, 1]], [[2], [2, 1]], [[2], [2, 2]], [[1], [2]], [[3], [1, 1, 1]])


def micro_problem(rng, alpha=None, max_binaries: int = 4, formulation: str = "risk"):
    """Small two-stage instance: one unit of each kind (or no renewable), at most ``max_binaries`` binaries.

    Every on/off state inside the horizon stays binary. With a renewable every
    non-root node also carries a renewable switch, so only the three-node chain
    fits the binary budget; load-only instances reach seven nodes.
    """
    while True:
        with_renewable = bool(rng.integers(0, 2))
        if with_renewable:
            shape = RENEWABLE_SHAPES[int(rng.integers(0, len(RENEWABLE_SHAPES)))]
            spec, wts = case_spec(), case_weights()
            low, high = [0.0, 0.3], [2.0, 1.5]
        else:
            shape = LOAD_ONLY_SHAPES[int(rng.integers(0, len(LOAD_ONLY_SHAPES)))]
            spec, wts = no_renewable_spec()
            low, high = [0.3], [1.5]
        tree = random_tree(rng, shape, spec.R + spec.D, spec.R, np.array(low), np.array(high))
        a = float(rng.choice([0.0, 1.0, rng.uniform(0, 1)])) if alpha is None else alpha
        problem = build_problem(tree, spec, wts, a, [rng.uniform(1.0, 6.0)], [float(rng.integers(0, 2))],
                                ProblemOptions(relax_stage=2, formulation=formulation))
        if problem.n_binaries <= max_binaries:
            return problem


@pytest.fixture(scope="session")
def shipped():
    return load_shipped()


def random_decisions(problem, rng) -> dict:
    """Per-node inputs drawn inside the unit limits, storage roughly balancing the children's mean demand."""
    from riskmpc.model import ControlInput

    tree, spec = problem.tree, problem.spec
    out = {}
    for i in tree.non_leaf_nodes:
        kids = list(tree.children(i))
        vals = tree.values[kids]
        on = rng.integers(0, 2, size=spec.T).astype(float)
        u_t = on * rng.uniform(spec.pt_min, spec.pt_max)
        u_r = rng.uniform(spec.pr_min, spec.pr_max)
        p_r = np.minimum(u_r, vals[:, :spec.R]).sum(axis=1) if spec.R else np.zeros(len(kids))
        need = vals[:, spec.R:].sum(axis=1) - p_r - u_t.sum()
        u_s = np.clip(need.mean() / spec.S + rng.normal(0.0, 0.1, spec.S), spec.ps_min, spec.ps_max)
        out[int(i)] = ControlInput(u_t, u_s, u_r, on)
    return out


def tiny_doc(steps: int = 2) -> dict:
    """Shipped case-study document shrunk to a short horizon and a few steps."""
    import copy

    doc = copy.deepcopy(load_shipped().document)
    doc["forecaster"]["n_fan"] = 20
    doc["tree"]["branching"] = [2, 1]
    doc["controller"]["horizon"] = 2
    doc["controller"]["alphas"] = [0.0, 1.0]
    doc["simulation"]["steps"] = steps
    doc["simulation"]["replicas"] = 1
    return doc


def renewable_interval(spec, u_r, w_r, delta_r):
    """Feasible ``p_r`` interval of the renewable rows for fixed setpoint, availability and switch."""
    sysm = assemble_constraints(spec, Disturbance([w_r], [0.0]))
    z = np.zeros(sysm.H2.shape[1])
    n_v = sysm.n_v
    pr = n_v + spec.T + spec.S
    dr = n_v + spec.n_units
    ur = spec.T + spec.S
    z[ur], z[dr] = u_r, delta_r
    z[sysm.w_cols.start] = w_r
    rows = [k for k, lab in enumerate(sysm.H2_labels) if lab.startswith("renewable")]
    a = sysm.H2[rows, pr]
    rest = sysm.h2[rows] - sysm.H2[rows] @ z  # z carries p_r = 0
    lo, hi = -np.inf, np.inf
    for ak, bk in zip(a, rest):
        if ak > 0:
            hi = min(hi, bk / ak)
        elif ak < 0:
            lo = max(lo, bk / ak)
        elif bk < 0:
            return None
    return (lo, hi) if lo <= hi + 1e-12 else None


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
