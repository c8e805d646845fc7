import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadmpc.costs import TimeOptConfig, WeightSet
from quadmpc.dynamics import NU, NX, QuadParams, Wrench, allocation_matrix, hover_input
from quadmpc.flight_controller import (AxisMPC, Cascade, CascadeSetpoints, ControllerMode,
                                       ControllerSettings, FlightController, mix, rate_limit)
from quadmpc.mpc_linear import HorizonConfig, InputBounds

P = QuadParams()
HOVER = hover_input(P)
HC = HorizonConfig()


def refs_at(pos=(0.0, 0.0, 0.0)):
    r = np.zeros((HC.N + 1, NX))
    r[:, :3] = pos
    return r


def test_mix_hover_thrust():
    u = mix(Wrench(P.mass * P.gravity, 0, 0, 0), P)
    np.testing.assert_allclose(u, HOVER, rtol=1e-12)


def test_mix_roll_torque_splits_rotors():
    u = mix(Wrench(P.mass * P.gravity, 0.01, 0, 0), P)
    assert u[3] > HOVER[3] and u[1] < HOVER[1]
    assert u[0] == pytest.approx(u[2])


@given(st.lists(st.floats(0, 5), min_size=4, max_size=4))
def test_mix_round_trip(us):
    u = np.array(us)
    w = allocation_matrix(P) @ u
    np.testing.assert_allclose(mix(Wrench(*w), P), u, atol=1e-10)


def test_mix_clamps():
    u = mix(Wrench(100.0, 0, 0, 0), P, InputBounds())
    np.testing.assert_array_equal(u, 5.0)


def test_rate_limit_examples():
    du = np.ones(NU)
    np.testing.assert_array_equal(rate_limit(np.zeros(NU), np.full(NU, 3.0), du), 1.0)
    np.testing.assert_array_equal(rate_limit(np.full(NU, 2.0), np.zeros(NU), du), 1.0)
    np.testing.assert_array_equal(rate_limit(np.full(NU, 2.0), [2.5, 1.5, 2, 3], du),
                                  [2.5, 1.5, 2, 3])
    np.testing.assert_array_equal(rate_limit(np.full(NU, 4.5), np.full(NU, 9.0), du,
                                             InputBounds()), 5.0)


@given(st.lists(st.floats(0, 5), min_size=4, max_size=4),
       st.lists(st.floats(-10, 10), min_size=4, max_size=4))
def test_rate_limit_idempotent_and_compliant(prev, cmd):
    b = InputBounds()
    once = rate_limit(prev, cmd, b.du_max, b)
    np.testing.assert_array_equal(rate_limit(prev, once, b.du_max, b), once)
    assert np.all(once >= 0) and np.all(once <= 5)
    assert np.all(np.abs(once - np.array(prev)) <= 1)


@pytest.mark.parametrize("mode", list(ControllerMode))
def test_every_mode_holds_hover(mode):
    ctrl = FlightController(P, WeightSet(), HC, InputBounds(), TimeOptConfig(2.4),
                            ControllerSettings(mode=mode))
    u = ctrl.step(np.zeros(NX), 0.0, refs_at(), np.tile(HOVER, (HC.N, 1)), HOVER)
    np.testing.assert_allclose(u, HOVER, atol=1e-4)


def test_mode_decides_time_optimal_flag():
    w, b = WeightSet(), InputBounds()
    on = TimeOptConfig(2.4, enabled=False)
    impc = FlightController(P, w, HC, b, on, ControllerSettings(ControllerMode.MONOLITHIC_IMPC))
    nmpc = FlightController(P, w, HC, b, TimeOptConfig(2.4, True),
                            ControllerSettings(ControllerMode.MONOLITHIC_NMPC))
    assert impc.time_opt.enabled and not nmpc.time_opt.enabled


def test_cascade_target_directly_above():
    cas = Cascade(P, WeightSet(), HC, InputBounds())
    sp = cas.setpoints(np.zeros(NX), refs_at((0, 0, 2.0)))
    assert sp.phi_ref == 0.0 and sp.theta_ref == 0.0
    assert sp.thrust > P.mass * P.gravity


def test_cascade_tilt_respects_guard():
    cas = Cascade(P, WeightSet(), HC, InputBounds(), tilt_guard=0.3)
    sp = cas.setpoints(np.zeros(NX), refs_at((40.0, -40.0, 0.0)))
    assert abs(sp.phi_ref) <= 0.3 and abs(sp.theta_ref) <= 0.3
    assert sp.theta_ref > 0 and sp.phi_ref > 0


def test_setpoint_guard_validation():
    with pytest.raises(ValueError):
        CascadeSetpoints(10.0, 0.6, 0.0, 0.0, tilt_guard=0.5)


def test_axis_mpc_moves_toward_target():
    ax = AxisMPC(HC, [1.0, 1.0], 0.1, [1.0, 1.0], [1.0, 1.0])
    refs = np.zeros((HC.N + 1, 2))
    refs[:, 0] = 1.0
    a = ax.solve(np.zeros(2), refs, 0.0, -5.0, 5.0)
    assert 0 < a <= 5
    assert ax.solve(np.zeros(2), np.zeros((HC.N + 1, 2)), 0.0, -5, 5) == pytest.approx(0, abs=1e-9)


def test_settings_round_trip_and_parse():
    s = ControllerSettings(mode="LQR", pos_clip=1.5)
    assert ControllerSettings.from_dict(s.to_dict()) == s
    assert ControllerMode.parse("MONOLITHIC_IMPC") is ControllerMode.MONOLITHIC_IMPC
    assert ControllerMode.parse("CascadeIMPC").time_optimal
    with pytest.raises(ValueError, match="unknown controller mode"):
        ControllerMode.parse("PID")
    with pytest.raises(ValueError):
        ControllerSettings(tilt_guard=2.0)
