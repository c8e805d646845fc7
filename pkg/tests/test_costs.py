import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from quadmpc.costs import (CostBreakdown, TimeOptConfig, WeightSet, time_factor,
                           time_optimal_term, total_cost, tracking_error, weighted_sqnorm)
from quadmpc.dynamics import NX

finite = st.floats(-10, 10, allow_nan=False)


def _unit_qi():
    return WeightSet(qi=np.r_[1.0, np.zeros(NX - 1)])


def test_weighted_sqnorm_examples():
    assert weighted_sqnorm(np.zeros(3), np.ones(3)) == 0
    assert weighted_sqnorm([1, 2], np.eye(2)) == 5
    assert weighted_sqnorm([1, 2, 3], np.diag([0.1] * 3)) == pytest.approx(1.4)
    with pytest.raises(ValueError):
        weighted_sqnorm([1, 2], np.ones(3))


def test_tracking_error_scenario_start():
    x = np.zeros(NX)
    ref = np.zeros(NX)
    ref[:3] = [5, 0, 0.5]
    np.testing.assert_array_equal(tracking_error(x, ref)[:3], [-5, 0, -0.5])
    assert tracking_error(ref, ref).tolist() == [0.0] * NX


def test_default_weights_pattern():
    w = WeightSet()
    assert w.q.tolist() == [1.0] * 10 + [0.0, 0.0]
    assert w.p.tolist() == w.q.tolist()
    assert w.qi.tolist() == [1.0] * 12
    assert w.r.tolist() == [0.1] * 4
    assert w.alpha == 0.5


def test_time_optimal_term_values():
    w = _unit_qi()
    e = np.zeros((1, NX))
    e[0, 0] = 1.0
    cfg = TimeOptConfig(t_o=2.4, enabled=True)
    assert time_optimal_term(e, w, 2.4, cfg) == 0.0
    assert time_optimal_term(e, w, 1.0, cfg) == pytest.approx(1.0137527, abs=1e-6)
    assert time_optimal_term(np.zeros((3, NX)), w, 0.3, cfg) == 0.0
    assert time_optimal_term(e, w, 1.0, TimeOptConfig(2.4, enabled=False)) == 0.0


def test_time_factor_v_shape():
    before = [time_factor(t, 2.4, 0.5) for t in np.linspace(0, 2.39, 50)]
    after = [time_factor(t, 2.4, 0.5) for t in np.linspace(2.41, 10, 50)]
    assert np.all(np.diff(before) < 0)
    assert np.all(np.diff(after) > 0)
    assert time_factor(2.4, 2.4, 0.5) == 0.0


def test_total_cost_components():
    w = WeightSet(q=np.r_[4.0, np.zeros(NX - 1)], p=np.r_[4.0, np.zeros(NX - 1)],
                  qi=np.r_[1.0, np.zeros(NX - 1)])
    refs = np.zeros((2, NX))
    xs = np.zeros((2, NX))
    xs[:, 0] = 1.0
    u = np.array([[1.0, 1.0, 1.0, 1.0]])
    cfg = TimeOptConfig(2.4, True)
    c = total_cost(xs, u, refs, w, 1.0, cfg)
    assert (c.jx, c.ju, c.jp) == pytest.approx((4.0, 0.4, 4.0))
    assert c.ji == pytest.approx(1.0137527, abs=1e-6)
    assert c.total == pytest.approx(8.4 + c.ji)


def test_total_cost_on_reference_is_zero():
    refs = np.ones((5, NX))
    c = total_cost(refs, np.zeros((1, 4)), refs, WeightSet(), 0.0, TimeOptConfig(2.4, True))
    assert c.total == 0.0


@given(arrays(float, (4, NX), elements=finite), arrays(float, (1, 4), elements=finite),
       st.floats(0, 10))
def test_disabled_term_reduces_to_standard_objective(xs, us, t):
    refs = np.zeros_like(xs)
    c = total_cost(xs, us, refs, WeightSet(), t, TimeOptConfig(enabled=False))
    assert c.ji == 0.0
    assert abs(c.total - (c.jx + c.ju + c.jp)) == 0


@given(arrays(float, (3, NX), elements=finite), st.permutations(list(range(NX))))
def test_permutation_invariance(xs, perm):
    perm = np.array(perm)
    w = WeightSet(q=np.linspace(0, 1, NX), p=np.linspace(1, 2, NX), qi=np.linspace(2, 3, NX))
    wp = WeightSet(q=w.q[perm], p=w.p[perm], qi=w.qi[perm])
    refs = np.zeros_like(xs)
    cfg = TimeOptConfig(2.4, True)
    u = np.ones((1, 4))
    a = total_cost(xs, u, refs, w, 1.0, cfg)
    b = total_cost(xs[:, perm], u, refs, wp, 1.0, cfg)
    np.testing.assert_allclose(a.as_array(), b.as_array(), rtol=1e-12, atol=1e-12)


def test_ji_nonnegative():
    e = np.random.default_rng(0).normal(size=(18, NX))
    for t in np.linspace(0, 10, 21):
        assert time_optimal_term(e, WeightSet(), t, TimeOptConfig(2.4, True)) >= 0


def test_weight_validation():
    with pytest.raises(ValueError):
        WeightSet(q=-np.ones(NX))
    with pytest.raises(ValueError):
        WeightSet(r=np.zeros(4))
    with pytest.raises(ValueError):
        WeightSet(alpha=0.0)
    with pytest.raises(ValueError):
        TimeOptConfig(t_o=0.0, enabled=True)
    w = WeightSet.from_dict(WeightSet().to_dict())
    assert w.to_dict() == WeightSet().to_dict()


def test_breakdown_sum():
    c = CostBreakdown(1, 2, 3, 4) + CostBreakdown(1, 1, 1, 1)
    assert c.as_array().tolist() == [2, 3, 4, 5]
    assert c.total == 14
