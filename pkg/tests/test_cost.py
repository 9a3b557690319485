from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskmpc.cost import (average_metrics, curtailment_cost, node_cost, running_cost, storage_soft_cost,
                          switch_cost)
from riskmpc.errors import ConfigurationError, DimensionError
from riskmpc.model import AuxiliaryVars, ControlInput

from conftest import case_spec, case_weights


def aux(p_t=0.35, p_s=0.15, p_r=0.5):
    return AuxiliaryVars([p_t], [p_s], [p_r], [1.0], 0.0)


def test_running_cost_examples():
    wts = case_weights()
    assert running_cost(ControlInput([0.0], [0.0], [0.0], [0.0]), aux(p_t=0.0), wts) == 0.0
    v = ControlInput([0.35], [0.1], [0.6], [1.0])
    expected = 0.1178 + 0.751 * 0.35 + (0.0693 * 0.35) ** 2
    assert running_cost(v, aux(), wts) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.38124, abs=1e-5)


def test_running_cost_linear_part_doubles():
    wts = case_weights(quadratic=[1e-300])
    v = ControlInput([0.0], [0.0], [0.0], [0.0])
    one = running_cost(v, aux(p_t=0.3), wts)
    two = running_cost(v, aux(p_t=0.6), wts)
    assert two == pytest.approx(2 * one, rel=1e-15)


def test_switch_cost_examples():
    wts = case_weights()
    assert switch_cost([1.0], [1.0], wts) == 0.0
    assert switch_cost([1.0], [0.0], wts) == pytest.approx(0.01, abs=1e-15)
    two = case_weights(start=[1, 1], linear=[1, 1], quadratic=[1, 1], switch=[0.1, 0.2])
    assert switch_cost([1, 0], [0, 1], two) == pytest.approx(0.05, abs=1e-15)


def test_curtailment_examples():
    spec, wts = case_spec(), case_weights()
    assert curtailment_cost(aux(p_r=2.0), spec, wts) == 0.0
    assert curtailment_cost(aux(p_r=0.5), spec, wts) == 2.25
    scaled = case_weights(curtail=[3.0])
    assert curtailment_cost(aux(p_r=0.5), spec, scaled) == pytest.approx(9 * 2.25)


def test_storage_soft_cost_examples():
    wts = case_weights()
    assert storage_soft_cost([3.0], wts) == 0.0
    assert storage_soft_cost([0.4], wts) == pytest.approx(300.0, rel=1e-12)
    assert storage_soft_cost([6.6], wts) == pytest.approx(300.0, rel=1e-12)


def test_node_cost_discounting():
    spec, wts = case_spec(), case_weights()
    v = ControlInput([0.0], [0.0], [0.0], [0.0])
    zero = AuxiliaryVars([0.0], [0.0], [2.0], [0.0], 0.0)
    assert node_cost(1, [3.0], v, [0.0], zero, wts, spec) == 0.0
    v = ControlInput([0.4], [0.0], [0.6], [1.0])
    a = node_cost(1, [3.0], v, [1.0], aux(), wts, spec)
    b = node_cost(2, [3.0], v, [1.0], aux(), wts, spec)
    assert b / a == pytest.approx(0.95, rel=1e-14)
    with pytest.raises(ValueError):
        node_cost(0, [3.0], v, [1.0], aux(), wts, spec)


def test_node_cost_unit_sum_at_stage_two():
    # one soft-band unit of violation with unit weight and nothing else
    spec = case_spec()
    wts = case_weights(storage=[1.0], start=[1e-300], linear=[1e-300], quadratic=[1e-300], switch=[1e-300],
                       curtail=[1e-300])
    v = ControlInput([0.0], [0.0], [2.0], [0.0])
    q = AuxiliaryVars([0.0], [0.0], [2.0], [1.0], 0.0)
    assert node_cost(2, [7.5], v, [0.0], q, wts, spec) == pytest.approx(0.9025, rel=1e-12)


def test_weights_validation():
    with pytest.raises(ConfigurationError):
        case_weights(storage=[0.0])
    with pytest.raises(ConfigurationError):
        case_weights(discount=1.0)


def test_average_metrics():
    log = SimpleNamespace(cost_o=[2.0, 2.0, 2.0], cost_s=[0.0, 0.0, 0.0])
    assert average_metrics(log) == (2.0, 0.0)
    assert average_metrics(SimpleNamespace(cost_o=[1.0, 1.0], cost_s=[0.0, 600.0]))[1] == 300.0
    assert average_metrics(SimpleNamespace(cost_o=[0.0], cost_s=[0.0])) == (0.0, 0.0)
    with pytest.raises(DimensionError):
        average_metrics(SimpleNamespace(cost_o=[], cost_s=[]))


@settings(max_examples=200, deadline=None)
@given(st.floats(-2.0, 10.0), st.floats(0.0, 1.5), st.floats(0.0, 2.0), st.floats(0, 1))
def test_components_nonnegative(x, p_t, p_r, d):
    spec, wts = case_spec(), case_weights()
    v = ControlInput([p_t], [0.0], [p_r], [round(d)])
    q = AuxiliaryVars([p_t], [0.0], [p_r], [1.0], 0.0)
    assert running_cost(v, q, wts) >= 0
    assert switch_cost([round(d)], [1.0 - round(d)], wts) >= 0
    assert curtailment_cost(q, spec, wts) >= 0
    assert storage_soft_cost([x], wts) >= 0


@settings(max_examples=200, deadline=None)
@given(st.floats(-3.0, 10.0))
def test_soft_cost_shape(x):
    wts = case_weights()
    val = storage_soft_cost([x], wts)
    if 0.5 <= x <= 6.5:
        assert val == 0.0
    else:
        assert val == pytest.approx(3000.0 * (0.5 - x if x < 0.5 else x - 6.5), rel=1e-12, abs=1e-9)
