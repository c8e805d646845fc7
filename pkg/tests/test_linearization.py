import math

import numpy as np
import pytest

from quadmpc.dynamics import NX, QuadParams, hover_input, step_rk4
from quadmpc.linearization import (RiccatiNotConverged, discretize, hover_model, linearize,
                                   lqr_gain, lqr_input, saturated_error)


def test_kinematic_blocks_are_exact(params):
    x0 = np.zeros(NX)
    x0[3:6] = [0.2, -0.1, 0.4]
    A, B = linearize(x0, hover_input(params), params)
    np.testing.assert_array_equal(A[:6, 6:], np.eye(6))
    np.testing.assert_array_equal(A[:6, :6], np.zeros((6, 6)))
    np.testing.assert_array_equal(B[:6], np.zeros((6, 4)))


def test_small_angle_tilt_entry():
    p = QuadParams(drag=(0, 0, 0))
    A, _ = linearize(np.zeros(NX), hover_input(p), p)
    assert A[6, 4] == pytest.approx(p.gravity, abs=1e-4)
    assert A[7, 3] == pytest.approx(-p.gravity, abs=1e-4)


def test_thrust_columns_symmetric(params):
    _, B = linearize(np.zeros(NX), hover_input(params), params)
    np.testing.assert_allclose(B[8], params.k_thrust / params.mass, rtol=1e-7)


def test_discretize_examples():
    Ad, Bd, _ = discretize(np.zeros((2, 2)), np.array([[1.0], [2.0]]), None, 0.3)
    np.testing.assert_array_equal(Ad, np.eye(2))
    np.testing.assert_allclose(Bd, [[0.3], [0.6]])
    Ad, _, _ = discretize([[-1.0]], [[1.0]], None, 0.1)
    assert abs(Ad[0, 0] - math.exp(-0.1)) < 1e-6
    Ad, _, _ = discretize([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], None, 0.5)
    np.testing.assert_array_equal(Ad, [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        discretize(np.zeros((1, 1)), np.zeros((1, 1)), None, 0.0)


def test_linear_model_tracks_plant_near_hover(params):
    lm = hover_model(params, 0.01)
    x = np.zeros(NX)
    x[:3] = [0.01, -0.01, 0.02]
    x[3:5] = [0.002, -0.001]
    u = hover_input(params) + np.array([0.001, -0.001, 0.0005, 0.0])
    dx = x.copy()
    for _ in range(50):
        x = step_rk4(x, u, params, dt=0.01)
        dx = lm.Ad @ dx + lm.Bd @ (u - lm.u0)
    assert np.max(np.abs(x[:3] - dx[:3])) < 1e-3


def test_scalar_dare():
    g = lqr_gain([[1.0]], [[1.0]], [[1.0]], [[1.0]])
    phi = (1 + math.sqrt(5)) / 2
    assert abs(g.P[0, 0] - phi) < 1e-6
    assert g.K[0, 0] == pytest.approx(phi / (1 + phi), abs=1e-6)


def test_zero_state_weight_gives_zero_gain():
    g = lqr_gain(np.eye(2) * 0.9, np.eye(2), np.zeros((2, 2)), np.eye(2))
    np.testing.assert_array_equal(g.K, 0.0)


def test_random_system_closed_loop_stable(rng):
    for _ in range(10):
        A = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 2))
        g = lqr_gain(A, B, np.eye(3), np.eye(2))
        assert np.max(np.abs(np.linalg.eigvals(A - B @ g.K))) < 1


def test_riccati_trace_monotone():
    trace = []
    A = np.array([[1.0, 0.1], [0.0, 1.0]])
    B = np.array([[0.005], [0.1]])
    lqr_gain(A, B, np.eye(2), [[0.1]], trace=trace)
    assert np.all(np.diff(trace) >= -1e-12)


def test_hover_lqr_is_stabilizing(params):
    lm = hover_model(params, 0.05)
    g = lqr_gain(lm.Ad, lm.Bd, np.diag(np.r_[np.ones(10), 0, 0]), 0.1 * np.eye(4), u0=lm.u0)
    assert np.max(np.abs(np.linalg.eigvals(lm.Ad - lm.Bd @ g.K))) < 1
    np.testing.assert_allclose(lqr_input(g, np.zeros(NX), np.zeros(NX)), hover_input(params))


def test_riccati_non_convergence():
    # unstable and uncontrollable mode: the recursion diverges
    with pytest.raises(RiccatiNotConverged):
        lqr_gain([[2.0]], [[0.0]], [[1.0]], [[1.0]], max_iter=50)


def test_saturated_error_clips_positions_only():
    x = np.zeros(NX)
    x[0], x[6] = 5.0, 5.0
    e = saturated_error(x, np.zeros(NX), 2.0)
    assert e[0] == 2.0 and e[6] == 5.0
