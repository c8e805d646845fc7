import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadmpc.costs import WeightSet
from quadmpc.dynamics import NU, NX, QuadParams, hover_input
from quadmpc.linearization import hover_model, lqr_gain
from quadmpc.mpc_linear import (HorizonConfig, InputBounds, LinearMPC, build_condensed, condense,
                                lmpc_step, move_blocking, prediction_matrices, stacked_weights)

DT = 0.05
AD = np.array([[1.0, DT], [0.0, 1.0]])
BD = np.array([[0.5 * DT ** 2], [DT]])


@pytest.fixture(scope="module")
def model():
    return hover_model(QuadParams(), DT)


def hover_refs(N, z=0.0):
    r = np.zeros((N + 1, NX))
    r[:, 2] = z
    return r


def test_double_integrator_origin_is_optimal():
    Q, R, P = np.eye(2), np.eye(1) * 0.1, np.eye(2)
    H, g, X, _ = condense(AD, BD, Q, R, P, 5, 2, np.zeros(2), np.zeros((6, 2)), np.zeros(2),
                          np.zeros(1))
    np.testing.assert_array_equal(g, 0)
    np.testing.assert_array_equal(X, 0)
    assert np.all(np.linalg.eigvalsh(H) > 0)


def test_single_step_closed_form():
    Q, R, P = np.diag([2.0, 1.0]), np.array([[0.3]]), np.diag([5.0, 0.5])
    x0 = np.array([0.4, -1.0])
    refs = np.array([[0.0, 0.0], [1.0, 0.5]])
    H, g, _, _ = condense(AD, BD, Q, R, P, 1, 1, x0, refs, np.zeros(2), np.zeros(1))
    np.testing.assert_allclose(H, BD.T @ P @ BD + R, rtol=1e-12)
    np.testing.assert_allclose(g, BD.T @ P @ (AD @ x0 - refs[1]), rtol=1e-12)


def test_unbounded_full_horizon_matches_least_squares():
    rng = np.random.default_rng(2)
    N = 6
    Q, R, P = np.diag([1.0, 0.5]), np.array([[0.2]]), np.diag([3.0, 1.0])
    x0 = rng.normal(size=2)
    refs = rng.normal(size=(N + 1, 2))
    H, g, _, _ = condense(AD, BD, Q, R, P, N, N, x0, refs, np.zeros(2), np.zeros(1))
    z = np.linalg.solve(H, -g)
    Phi, Gam = prediction_matrices(AD, BD, N, N)
    W = np.kron(np.eye(N + 1), Q)
    W[-2:, -2:] = P
    L = np.linalg.cholesky(W).T
    A = np.vstack([L @ Gam, np.sqrt(R[0, 0]) * np.eye(N)])
    b = np.concatenate([L @ (refs.ravel() - Phi @ x0), np.zeros(N)])
    z_ls = np.linalg.lstsq(A, b, rcond=None)[0]
    np.testing.assert_allclose(z, z_ls, atol=1e-9)


def test_prediction_matches_simulation():
    rng = np.random.default_rng(4)
    N, Nu = 7, 3
    z = rng.normal(size=Nu)
    x0 = rng.normal(size=2)
    Phi, Gam = prediction_matrices(AD, BD, N, Nu)
    X = (Phi @ x0 + Gam @ z).reshape(N + 1, 2)
    x = x0.copy()
    for k in range(N):
        assert X[k] == pytest.approx(x)
        x = AD @ x + BD @ z[min(k, Nu - 1):min(k, Nu - 1) + 1]
    assert X[N] == pytest.approx(x)


def test_move_blocking_holds_last_move():
    S = move_blocking(4, 2)
    assert S.shape == (4 * NU, 2 * NU)
    z = np.arange(2 * NU, dtype=float)
    u = (S @ z).reshape(4, NU)
    np.testing.assert_array_equal(u[0], z[:NU])
    for k in (1, 2, 3):
        np.testing.assert_array_equal(u[k], z[NU:])


def test_stacked_weight_blocks():
    w = WeightSet()
    Qb, Rb = stacked_weights(w, 3, 2)
    assert Qb.shape == (3 * NX, 3 * NX)
    for k in range(3):
        np.testing.assert_array_equal(Qb[k * NX:(k + 1) * NX, k * NX:(k + 1) * NX], w.Q)
    np.testing.assert_array_equal(Qb[:NX, NX:], 0)
    assert Rb.shape == (2 * NU, 2 * NU)


def test_hover_stays_at_hover(model):
    hc = HorizonConfig()
    u = lmpc_step(np.zeros(NX), hover_refs(hc.N), model.u0, model, WeightSet(), hc,
                  InputBounds())
    np.testing.assert_allclose(u, model.u0, atol=1e-6)
    np.testing.assert_allclose(model.u0, hover_input(QuadParams()), atol=1e-12)


def test_target_far_above_saturates(model):
    hc = HorizonConfig()
    u = lmpc_step(np.zeros(NX), hover_refs(hc.N, 50.0), np.full(NU, 5.0), model, WeightSet(),
                  hc, InputBounds())
    np.testing.assert_allclose(u, 5.0)


def test_rate_limit_from_rest(model):
    hc = HorizonConfig()
    u = lmpc_step(np.zeros(NX), hover_refs(hc.N, 10.0), np.zeros(NU), model, WeightSet(), hc,
                  InputBounds())
    np.testing.assert_allclose(u, 1.0)


def test_rate_conflict_falls_back_to_magnitude_box(model):
    hc = HorizonConfig()
    cq = build_condensed(model, WeightSet(), hc, np.zeros(NX), hover_refs(hc.N),
                         np.full(NU, 8.0), InputBounds())
    assert cq.rate_conflict
    np.testing.assert_array_equal(cq.first_lo, 0)
    np.testing.assert_array_equal(cq.first_hi, 5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_output_within_boxes(model, seed):
    rng = np.random.default_rng(seed)
    hc = HorizonConfig(N=10, N_u=2)
    x = np.zeros(NX)
    x[:3] = rng.uniform(-5, 5, 3)
    x[3:6] = rng.uniform(-0.3, 0.3, 3)
    x[6:] = rng.uniform(-1, 1, 6)
    u_prev = rng.uniform(0, 5, NU)
    gain = lqr_gain(model.Ad, model.Bd, WeightSet().Q, WeightSet().R).K
    ctrl = LinearMPC(model, WeightSet(), hc, InputBounds(), gain=gain, pos_clip=2.0)
    u = ctrl.step(x, hover_refs(hc.N, rng.uniform(0, 5)), u_prev)
    assert np.all(u >= 0) and np.all(u <= 5)
    assert np.all(np.abs(u - u_prev) <= 1 + 1e-12)


def test_shift_invariance(model):
    hc = HorizonConfig()
    x = np.zeros(NX)
    x[:3] = [1.0, -2.0, 0.5]
    refs = hover_refs(hc.N, 1.0)
    u1 = lmpc_step(x, refs, model.u0, model, WeightSet(), hc, InputBounds())
    shift = np.zeros(NX)
    shift[:3] = [3.0, 4.0, -2.0]
    u2 = lmpc_step(x + shift, refs + shift, model.u0, model, WeightSet(), hc, InputBounds())
    np.testing.assert_allclose(u1, u2, atol=1e-9)


def test_horizon_validation():
    with pytest.raises(ValueError):
        HorizonConfig(N=3, N_u=4)
    with pytest.raises(ValueError):
        HorizonConfig(dt=0)
    with pytest.raises(ValueError):
        InputBounds(u_min=3.0, u_max=1.0)
    assert HorizonConfig().T == pytest.approx(0.9)
