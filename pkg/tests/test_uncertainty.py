import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskmpc.errors import ConfigurationError, DimensionError, TreeConsistencyError
from riskmpc.uncertainty import (ForecasterSpec, HelpSpec, ScenarioFan, ScenarioTree, SignalModel, WindCurve,
                                 chain_tree, inject_help, kantorovich_distance, read_fan_csv, read_tree_csv,
                                 reduce_to_tree, simulate_fan, write_fan_csv, write_tree_csv)

from conftest import random_fan, random_tree


def forecaster(wind_sigma=0.6, load_sigma=0.03, wind_mean=7.0):
    wind = SignalModel(ar=(0.9,), sigma=wind_sigma, mean=wind_mean)
    load = SignalModel(ar=(0.7,), seasonal_ar=(0.95,), season=48, sigma=load_sigma, mean=0.8)
    return ForecasterSpec((wind,), (load,), (WindCurve(2 / 1728, 2.0),), 0)


def history(spec, n=100):
    return np.column_stack([np.full(n, 7.0), np.full(n, 0.8)])


def assert_tree_valid(tree: ScenarioTree, tol=1e-10):
    for j in range(tree.horizon + 1):
        assert abs(tree.probability[tree.nodes(j)].sum() - 1.0) <= tol
    for i in tree.non_leaf_nodes:
        assert abs(tree.probability[list(tree.children(i))].sum() - tree.probability[i]) <= tol
    assert np.all(np.diff(tree.stage) >= 0)
    for i in range(1, tree.n_nodes):
        assert tree.stage[tree.ancestor[i]] == tree.stage[i] - 1
    assert tree.n_scenarios == len(tree.leaves)


def test_zero_sigma_fan_is_the_mean_forecast():
    spec = forecaster(0.0, 0.0)
    fan = simulate_fan(spec, history(spec), 6, 20, 1)
    assert np.all(fan.trajectories == fan.trajectories[0])


def test_fan_shape_at_case_study_size():
    spec = forecaster()
    fan = simulate_fan(spec, history(spec), 8, 500, 3)
    assert fan.trajectories.shape == (500, 8, 2)
    assert np.all(fan.trajectories >= 0)
    assert np.all(fan.trajectories[:, :, 0] <= 2.0)


def test_calm_wind_gives_no_renewable_power():
    spec = forecaster(wind_sigma=0.0, wind_mean=0.0)
    hist = np.column_stack([np.zeros(100), np.full(100, 0.8)])
    fan = simulate_fan(spec, hist, 4, 10, 0)
    assert np.all(fan.trajectories[:, :, 0] == 0.0)


def test_short_history_rejected():
    spec = forecaster()
    with pytest.raises(ConfigurationError):
        simulate_fan(spec, history(spec, 10), 4, 10, 0)


def test_fan_is_deterministic():
    spec = forecaster()
    a = simulate_fan(spec, history(spec), 4, 30, [5, 3, 0])
    b = simulate_fan(spec, history(spec), 4, 30, [5, 3, 0])
    assert np.array_equal(a.trajectories, b.trajectories)
    assert np.array_equal(reduce_to_tree(a, [3, 2, 1, 1]).values, reduce_to_tree(b, [3, 2, 1, 1]).values,
                          equal_nan=True)


def test_scenario_k_does_not_depend_on_fan_size():
    spec = forecaster()
    small = simulate_fan(spec, history(spec), 4, 5, 9)
    large = simulate_fan(spec, history(spec), 4, 50, 9)
    assert np.array_equal(small.trajectories, large.trajectories[:5])


def test_lossless_reduction():
    fan = random_fan(np.random.default_rng(0), 12, 3)
    tree = reduce_to_tree(fan, [12, 1, 1])
    assert tree.n_scenarios == 12
    assert kantorovich_distance(fan, tree) == 0.0


def test_total_collapse():
    fan = random_fan(np.random.default_rng(1), 12, 3)
    tree = reduce_to_tree(fan, [1, 1, 1])
    assert tree.n_scenarios == 1
    assert np.all(tree.probability == 1.0)


def test_case_study_branching_and_help():
    spec = forecaster()
    fan = simulate_fan(spec, history(spec), 8, 500, 0)
    tree = reduce_to_tree(fan, [6, 2, 1, 1, 1, 1, 1, 1])
    assert tree.n_scenarios == 12
    helped = inject_help(tree, fan, HelpSpec())
    assert helped.n_scenarios == 14
    assert_tree_valid(helped)


def test_help_vanishing_mass():
    fan = random_fan(np.random.default_rng(2), 20, 3)
    tree = reduce_to_tree(fan, [3, 2, 1])
    helped = inject_help(tree, fan, HelpSpec(epsilon=1e-15))
    for j in range(1, tree.horizon + 1):
        kept = helped.nodes(j)[:-2]  # the two HELP nodes close every stage
        assert np.allclose(helped.probability[kept], tree.probability[tree.nodes(j)], rtol=0, atol=1e-12)


def test_help_on_degenerate_fan_follows_the_path():
    path = np.array([[0.5, 0.8], [0.6, 0.9], [0.7, 1.0]])
    fan = ScenarioFan(np.repeat(path[None], 10, axis=0), 1)
    helped = inject_help(reduce_to_tree(fan, [2, 1, 1]), fan, HelpSpec(1e-3, 0.001, 0.999))
    for leaf in helped.leaves:
        assert np.allclose(helped.values[helped.path(leaf)[1:]], path)


def test_help_mass_too_large():
    fan = random_fan(np.random.default_rng(3), 20, 2)
    tree = reduce_to_tree(fan, [4, 1])
    with pytest.raises(ConfigurationError):
        inject_help(tree, fan, HelpSpec(epsilon=0.49))


def test_distance_examples():
    twins = ScenarioFan(np.array([[[1.0, 0.5]], [[1.0, 0.5]]]), 1)
    assert kantorovich_distance(twins, reduce_to_tree(twins, [1])) == 0.0
    pair = ScenarioFan(np.array([[[0.0]], [[2.0]]]), 1)
    tree = reduce_to_tree(pair, [1])
    assert tree.values[1, 0] == 0.0
    assert kantorovich_distance(pair, tree) == pytest.approx(1.0, abs=1e-15)


def test_distance_horizon_mismatch():
    fan = random_fan(np.random.default_rng(4), 5, 3)
    other = random_fan(np.random.default_rng(4), 5, 2)
    with pytest.raises(DimensionError):
        kantorovich_distance(fan, reduce_to_tree(other, [2, 1]))


def test_empty_or_malformed_fan():
    with pytest.raises(DimensionError):
        ScenarioFan(np.zeros((0, 3, 2)), 1)
    fan = random_fan(np.random.default_rng(5), 5, 3)
    with pytest.raises(DimensionError):
        reduce_to_tree(fan, [2, 1])


def test_tree_rejects_bad_probabilities():
    with pytest.raises(TreeConsistencyError):
        ScenarioTree([0, 1, 1], [-1, 0, 0], [1.0, 0.5, 0.4], np.full((3, 2), 0.5), 1)


def test_chain_tree():
    tree = chain_tree(np.array([[1.0, 0.5], [0.8, 0.6]]), 1)
    assert tree.n_nodes == 3 and tree.n_scenarios == 1
    assert tree.children(0) == (1,) and tree.children(1) == (2,)


def test_fan_csv_round_trip(tmp_path):
    fan = random_fan(np.random.default_rng(6), 7, 4)
    write_fan_csv(fan, tmp_path / "fan.csv")
    back = read_fan_csv(tmp_path / "fan.csv")
    assert np.array_equal(back.trajectories, fan.trajectories)
    assert back.n_renewables == fan.n_renewables


def test_tree_csv_round_trip(tmp_path):
    fan = random_fan(np.random.default_rng(7), 30, 3)
    tree = inject_help(reduce_to_tree(fan, [4, 2, 1]), fan, HelpSpec())
    write_tree_csv(tree, tmp_path / "tree.csv")
    back = read_tree_csv(tmp_path / "tree.csv")
    assert np.array_equal(back.stage, tree.stage)
    assert np.array_equal(back.ancestor, tree.ancestor)
    assert np.array_equal(back.probability, tree.probability)
    assert np.array_equal(back.values, tree.values, equal_nan=True)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(2, 40))
def test_reduction_yields_valid_trees(seed, horizon, n):
    rng = np.random.default_rng(seed)
    fan = random_fan(rng, n, horizon)
    branching = rng.integers(1, 5, size=horizon)
    tree = reduce_to_tree(fan, branching)
    assert_tree_valid(tree)
    for i in tree.non_leaf_nodes:
        assert len(tree.children(i)) <= branching[tree.stage[i]]
    if 2e-3 < tree.probability[list(tree.children(0))].min():
        assert_tree_valid(inject_help(tree, fan, HelpSpec()))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_refinement_never_increases_distance(seed):
    rng = np.random.default_rng(seed)
    horizon = int(rng.integers(2, 5))
    fan = random_fan(rng, int(rng.integers(10, 50)), horizon)
    coarse = rng.integers(1, 4, size=horizon)
    fine = coarse + rng.integers(0, 3, size=horizon)
    assert kantorovich_distance(fan, reduce_to_tree(fan, fine)) <= kantorovich_distance(
        fan, reduce_to_tree(fan, coarse)) + 1e-12


def test_random_tree_helper_is_valid():
    tree = random_tree(np.random.default_rng(0), [[2], [2, 1]], 2, 1)
    assert_tree_valid(tree)
    assert tree.n_nodes == 6
