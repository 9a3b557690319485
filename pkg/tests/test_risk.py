import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskmpc.errors import CapacityError, DimensionError, DomainError, TreeConsistencyError
from riskmpc.risk import (DiscreteDistribution, avar, avar_constraint_block, avar_dual_oracle, expectation,
                          worst_case)

from oracles import avar_scalar


@st.composite
def instances(draw, k_max=8):
    k = draw(st.integers(1, k_max))
    z = draw(st.lists(st.floats(-50, 50, allow_nan=False), min_size=k, max_size=k))
    w = draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k))
    alpha = draw(st.floats(0.0, 1.0))
    p = np.array(w) / np.sum(w)
    return np.array(z), p, alpha


def test_expectation_examples():
    assert expectation([1, 2, 3, 4], [0.25] * 4) == 2.5
    assert expectation([7.5, 7.5, 7.5], [0.2, 0.3, 0.5]) == pytest.approx(7.5, abs=1e-15)
    assert expectation([1, 0, 0], [0.3, 0.3, 0.4]) == pytest.approx(0.3)


def test_expectation_length_mismatch():
    with pytest.raises(DimensionError):
        expectation([1, 2], [0.5, 0.25, 0.25])


def test_worst_case_examples():
    assert worst_case([1, 2, 3, 4]) == 4
    assert worst_case([-5]) == -5
    assert worst_case([2, 2, 2]) == 2
    with pytest.raises(DimensionError):
        worst_case([])


def test_avar_examples():
    z, p = [1, 2, 3, 4], [0.25] * 4
    assert avar(z, p, 1.0) == 2.5
    assert avar(z, p, 0.0) == 4
    assert avar(z, p, 0.5) == pytest.approx(3.5, abs=1e-9)


def test_avar_rejects_bad_alpha():
    with pytest.raises(DomainError):
        avar([1, 2], [0.5, 0.5], 1.5)
    with pytest.raises(DomainError):
        avar([1, 2], [0.5, 0.5], -0.1)


def test_dual_oracle_examples():
    assert avar_dual_oracle([1, 2, 3, 4], [0.25] * 4, 0.5) == pytest.approx(3.5, abs=1e-12)
    for a in (0.0, 0.3, 1.0):
        assert avar_dual_oracle([7], [1.0], a) == 7
    # the whole simplex is the ambiguity set at level zero
    assert avar_dual_oracle([1, 0, 0], [0.3, 0.3, 0.4], 0.0) == 1


def test_dual_oracle_capacity():
    with pytest.raises(CapacityError):
        avar_dual_oracle(np.arange(13.0), np.full(13, 1 / 13), 0.5)


def test_distribution_validation():
    with pytest.raises(DomainError):
        DiscreteDistribution([0.5, 0.5, 0.0])
    with pytest.raises(DomainError):
        DiscreteDistribution([0.5, 0.6])
    d = DiscreteDistribution([0.5, 0.5 + 5e-11])
    assert d.probabilities.sum() == pytest.approx(1.0, abs=1e-15)


def test_constraint_block_examples():
    assert avar_constraint_block(0.3, [0.5], 0.5).weights.tolist() == [1.0]
    blk = avar_constraint_block(0.3, [0.25, 0.25], 0.5)
    assert blk.weights.tolist() == [0.5, 0.5]
    assert blk.xi_coef == -0.3 and blk.t_coef == -1.0 and blk.hook_coef == 1.0
    # root of a two-branch tree: weights are the branch probabilities themselves
    blk = avar_constraint_block(0.5, [0.4, 0.6], 1.0)
    assert blk.weights.tolist() == [0.4, 0.6]


def test_constraint_block_inconsistent_mass():
    with pytest.raises(TreeConsistencyError):
        avar_constraint_block(0.5, [0.2, 0.2], 0.5)


@settings(max_examples=200, deadline=None)
@given(instances())
def test_three_forms_agree(inst):
    z, p, a = inst
    lp = avar(z, p, a)
    assert lp == pytest.approx(avar_dual_oracle(z, p, a), abs=1e-6)
    assert lp == pytest.approx(avar_scalar(z, p, a), abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(instances(), st.floats(0.0, 1.0))
def test_monotone_in_alpha(inst, other):
    z, p, a = inst
    lo, hi = sorted((a, other))
    assert avar(z, p, lo) >= avar(z, p, hi) - 1e-9


@settings(max_examples=200, deadline=None)
@given(instances())
def test_between_expectation_and_max(inst):
    z, p, a = inst
    v = avar(z, p, a)
    assert expectation(z, p) - 1e-9 <= v <= worst_case(z) + 1e-9


@settings(max_examples=200, deadline=None)
@given(instances(), st.floats(-20, 20), st.floats(0, 5))
def test_translation_and_homogeneity(inst, c, scale):
    z, p, a = inst
    base = avar(z, p, a)
    assert avar(z + c, p, a) == pytest.approx(base + c, abs=1e-7)
    assert avar(scale * z, p, a) == pytest.approx(scale * base, abs=1e-7 * max(1.0, scale))


@settings(max_examples=200, deadline=None)
@given(instances(), st.data())
def test_monotone_and_convex(inst, data):
    z, p, a = inst
    bump = np.array(data.draw(st.lists(st.floats(0, 10), min_size=z.size, max_size=z.size)))
    assert avar(z + bump, p, a) >= avar(z, p, a) - 1e-9
    other = np.array(data.draw(st.lists(st.floats(-50, 50), min_size=z.size, max_size=z.size)))
    lam = data.draw(st.floats(0, 1))
    mix = avar(lam * z + (1 - lam) * other, p, a)
    assert mix <= lam * avar(z, p, a) + (1 - lam) * avar(other, p, a) + 1e-7
