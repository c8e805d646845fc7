"""Quadrotor MPC toolkit: plant model, linear and nonlinear MPC with an
optional time-optimal cost term, LQR baseline and a closed-loop harness."""

from quadmpc.costs import CostBreakdown, TimeOptConfig, WeightSet
from quadmpc.dynamics import QuadParams, SingularityError, Wrench
from quadmpc.flight_controller import ControllerMode, ControllerSettings, FlightController
from quadmpc.mpc_linear import HorizonConfig, InputBounds
from quadmpc.reference import Scenario
from quadmpc.sim import RunMetrics, SimulationAbort, compute_metrics, run_closed_loop, sweep_time_optimal

__all__ = [
    "ControllerMode", "ControllerSettings", "CostBreakdown", "FlightController", "HorizonConfig",
    "InputBounds", "QuadParams", "RunMetrics", "Scenario", "SimulationAbort", "SingularityError",
    "TimeOptConfig", "WeightSet", "Wrench", "compute_metrics", "run_closed_loop",
    "sweep_time_optimal",
]
