"""Closed-loop simulation, run metrics and the time-optimal sweep."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from quadmpc.costs import TimeOptConfig, WeightSet
from quadmpc.dynamics import QuadParams, SingularityError, hover_input, step_rk4
from quadmpc.flight_controller import ControllerMode, ControllerSettings, FlightController
from quadmpc.mpc_linear import HorizonConfig, InputBounds
from quadmpc.reference import Reference, Scenario

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("t", "x", "y", "z", "phi", "theta", "psi", "vx", "vy", "vz", "p", "q", "r",
                 "tx", "ty", "tz", "u1", "u2", "u3", "u4", "jx", "ju", "jp", "ji")
SANITY_RADIUS = 100.0
FLIGHT_THRESHOLD = 0.01


class SimulationAbort(RuntimeError):
    """The plant left the valid region; ``trace`` holds the rows up to that point."""

    def __init__(self, message: str, trace: np.ndarray):
        super().__init__(message)
        self.trace = trace


@dataclass
class RunMetrics:
    total_err: np.ndarray
    min_err: np.ndarray
    flight_time: float | None
    trace: np.ndarray = field(repr=False)
    label: str = ""

    @property
    def position_errors(self) -> np.ndarray:
        return position_errors(self.trace)


def position_errors(trace) -> np.ndarray:
    trace = np.asarray(trace, dtype=float).reshape(-1, len(TRACE_COLUMNS))
    return trace[:, 1:4] - trace[:, 13:16]


def compute_metrics(trace, threshold: float = FLIGHT_THRESHOLD, label: str = "") -> RunMetrics:
    """Cumulative and minimum absolute error per axis, and the flight time.

    The flight time is the first trace time at which all three axis errors are
    below ``threshold``; it is None when that never happens.
    """
    trace = np.asarray(trace, dtype=float).reshape(-1, len(TRACE_COLUMNS))
    err = np.abs(position_errors(trace))
    if len(trace) == 0:
        return RunMetrics(np.zeros(3), np.full(3, np.nan), None, trace, label)
    inside = np.all(err < threshold, axis=1)
    flight = float(trace[np.argmax(inside), 0]) if inside.any() else None
    return RunMetrics(err.sum(axis=0), err.min(axis=0), flight, trace, label)


def run_closed_loop(sc: Scenario, settings: ControllerSettings | ControllerMode | str,
                    time_opt: TimeOptConfig | None = None, w: WeightSet | None = None,
                    hc: HorizonConfig | None = None, b: InputBounds | None = None,
                    p: QuadParams | None = None, threshold: float = FLIGHT_THRESHOLD,
                    label: str = "") -> RunMetrics:
    """Simulate one run: zero-order hold at the controller rate, RK4 plant.

    Raises ``SimulationAbort`` if the state turns non-finite, hits the Euler
    singularity or leaves the sanity sphere.
    """
    if not isinstance(settings, ControllerSettings):
        settings = ControllerSettings(mode=settings)
    w = w or WeightSet()
    hc = hc or HorizonConfig(dt=sc.ctrl_dt)
    b = b or InputBounds()
    p = p or QuadParams()
    if not math.isclose(hc.dt, sc.ctrl_dt, rel_tol=1e-12):
        raise ValueError("horizon dt must equal the scenario controller dt")
    ctrl = FlightController(p, w, hc, b, time_opt, settings)
    ref = Reference(sc, p)
    f_ext = np.asarray(sc.external_force, dtype=float)
    n = int(round(sc.duration / sc.plant_dt))
    sub = sc.substeps
    rows = np.empty((n, len(TRACE_COLUMNS)))
    x = np.asarray(sc.initial_state, dtype=float).copy()
    u = hover_input(p)
    for k in range(n):
        t = round(k * sc.plant_dt, 12)
        if k % sub == 0:
            refs, u_ref = ref.plan(t, hc.N, hc.dt)
            u = ctrl.step(x, t, refs, u_ref, u)
        rows[k, 0] = t
        rows[k, 1:13] = x
        rows[k, 13:16] = ref.state(t)[:3]
        rows[k, 16:20] = u
        rows[k, 20:24] = ctrl.last_cost.as_array()
        try:
            x = step_rk4(x, u, p, f_ext, sc.plant_dt)
        except SingularityError as exc:
            raise SimulationAbort(f"plant singular at t={t:.2f}s: {exc}", rows[:k + 1]) from exc
        if not np.all(np.isfinite(x)):
            raise SimulationAbort(f"non-finite state at t={t + sc.plant_dt:.2f}s", rows[:k + 1])
        if np.linalg.norm(x[:3]) > SANITY_RADIUS:
            raise SimulationAbort(f"left the {SANITY_RADIUS:g} m sphere at t={t + sc.plant_dt:.2f}s",
                                  rows[:k + 1])
    return compute_metrics(rows, threshold, label or settings.mode.value)


@dataclass
class SweepRow:
    label: str
    t_o: float | None
    metrics: RunMetrics | None
    error: str | None = None


def _sweep_job(args):
    label, t_o, sc, settings, time_opt, w, hc, b, p, threshold = args
    try:
        m = run_closed_loop(sc, settings, time_opt, w, hc, b, p, threshold, label)
        return SweepRow(label, t_o, m)
    except (SimulationAbort, ArithmeticError, ValueError) as exc:
        return SweepRow(label, t_o, None, str(exc))


def sweep_time_optimal(sc: Scenario, t_o_values, w: WeightSet | None = None,
                       hc: HorizonConfig | None = None, b: InputBounds | None = None,
                       p: QuadParams | None = None,
                       settings: ControllerSettings | None = None,
                       threshold: float = FLIGHT_THRESHOLD, jobs: int = 1) -> list[SweepRow]:
    """LQR, standard NMPC, then IMPC for every ``t_o`` in the given order.

    ``settings`` supplies the shared knobs; its mode only chooses between the
    monolithic and the cascade family for the MPC rows. A failing row is kept
    with its error message and the sweep goes on.
    """
    t_o_values = [float(v) for v in t_o_values]
    if not t_o_values:
        raise ValueError("t_o list must not be empty")
    settings = settings or ControllerSettings()
    cascade = settings.mode in (ControllerMode.CASCADE_NMPC, ControllerMode.CASCADE_IMPC)
    std = ControllerMode.CASCADE_NMPC if cascade else ControllerMode.MONOLITHIC_NMPC
    imp = ControllerMode.CASCADE_IMPC if cascade else ControllerMode.MONOLITHIC_IMPC
    jobs_list = [("LQR", None, replace(settings, mode=ControllerMode.LQR), None),
                 ("MPC", None, replace(settings, mode=std), None)]
    for t_o in t_o_values:
        jobs_list.append((f"IMPC t_o={t_o:g}", t_o, replace(settings, mode=imp),
                          TimeOptConfig(t_o=t_o, enabled=True)))
    args = [(label, t_o, sc, s, cfg, w, hc, b, p, threshold)
            for label, t_o, s, cfg in jobs_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_job, args))
    else:
        rows = [_sweep_job(a) for a in args]
    for r in rows:
        if r.error:
            log.warning("sweep row %s failed: %s", r.label, r.error)
    return rows
