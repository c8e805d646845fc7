"""Controller assembly: monolithic MPC variants, the three-loop cascade and
the LQR baseline, behind one ``FlightController.step`` call.

Every mode shares the same last stage: the command is clamped into the rate
box around the previous input and then into the magnitude box.

The cascade splits the plant into an altitude loop (z, vz) producing the
thrust, a planar loop (x, vx and y, vy under the small-angle model) producing
tilt references, and an attitude loop (angle, rate per axis) producing the
torques. Each loop is a condensed MPC on its double-integrator model with the
same horizon, control horizon and sample time as the monolithic controllers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from quadmpc.costs import CostBreakdown, TimeOptConfig, WeightSet, time_factor
from quadmpc.dynamics import (IPHI, IPSI, ITHETA, IVZ, NU, NX, QuadParams, Wrench,
                              allocation_matrix, hover_input)
from quadmpc.linearization import hover_model, lqr_gain, saturated_error
from quadmpc.mpc_linear import HorizonConfig, InputBounds, LinearMPC, condense
from quadmpc.mpc_nonlinear import NonlinearMPC
from quadmpc.qp import BoxQP, solve_box_qp


class ControllerMode(enum.Enum):
    MONOLITHIC_LMPC = "MonolithicLMPC"
    MONOLITHIC_NMPC = "MonolithicNMPC"
    MONOLITHIC_IMPC = "MonolithicIMPC"
    CASCADE_NMPC = "CascadeNMPC"
    CASCADE_IMPC = "CascadeIMPC"
    LQR = "LQR"

    @classmethod
    def parse(cls, name: str) -> "ControllerMode":
        for m in cls:
            if name in (m.value, m.name):
                return m
        raise ValueError(f"unknown controller mode {name!r}; "
                         f"choose from {', '.join(m.value for m in cls)}")

    @property
    def time_optimal(self) -> bool:
        return self in (ControllerMode.MONOLITHIC_IMPC, ControllerMode.CASCADE_IMPC)


@dataclass(frozen=True)
class ControllerSettings:
    """Knobs the assembly needs beyond weights, horizon and bounds."""

    mode: ControllerMode = ControllerMode.MONOLITHIC_NMPC
    pos_clip: float = 2.0
    max_iter: int = 200
    tilt_guard: float = 0.5

    def __post_init__(self):
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", ControllerMode.parse(self.mode))
        if not self.pos_clip > 0:
            raise ValueError("pos_clip must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.tilt_guard < math.pi / 2:
            raise ValueError("tilt_guard must lie in (0, pi/2)")

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerSettings":
        return cls(**d)

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "pos_clip": self.pos_clip,
                "max_iter": self.max_iter, "tilt_guard": self.tilt_guard}


@dataclass(frozen=True)
class CascadeSetpoints:
    thrust: float
    phi_ref: float
    theta_ref: float
    tau_psi: float
    tilt_guard: float = 0.5

    def __post_init__(self):
        if abs(self.phi_ref) > self.tilt_guard or abs(self.theta_ref) > self.tilt_guard:
            raise ValueError("tilt reference exceeds the tilt guard")


def mix(wrench: Wrench, p: QuadParams, b: InputBounds | None = None) -> np.ndarray:
    """Invert the allocation, then clamp to the magnitude box."""
    u = np.linalg.solve(allocation_matrix(p), wrench.as_array())
    if b is not None:
        u = np.clip(u, b.u_min, b.u_max)
    return u


def rate_limit(u_prev, u_cmd, du_max, b: InputBounds | None = None) -> np.ndarray:
    """Clamp into ``u_prev +- du_max``, then into the magnitude box."""
    u_prev = np.asarray(u_prev, dtype=float)
    du_max = np.broadcast_to(np.asarray(du_max, dtype=float), u_prev.shape)
    u = np.clip(np.asarray(u_cmd, dtype=float), u_prev - du_max, u_prev + du_max)
    # u_prev + du_max can round so that the computed difference exceeds du_max
    for _ in range(4):
        up = u - u_prev > du_max
        down = u_prev - u > du_max
        if not (up.any() or down.any()):
            break
        u = np.where(up, np.nextafter(u, -np.inf), u)
        u = np.where(down, np.nextafter(u, np.inf), u)
    if b is not None:
        u = np.clip(u, b.u_min, b.u_max)
    return u


def _double_integrator(dt: float):
    Ad = np.array([[1.0, dt], [0.0, 1.0]])
    Bd = np.array([[0.5 * dt * dt], [dt]])
    return Ad, Bd


class AxisMPC:
    """Condensed MPC on one double integrator, pre-stabilized by its own LQR.

    The decision is the held correction added to the feedforward acceleration.
    ``q`` and ``p`` weight (position, velocity); ``r`` weights the acceleration.
    """

    def __init__(self, hc: HorizonConfig, q, r: float, p, qi):
        self.hc = hc
        self.Ad, self.Bd = _double_integrator(hc.dt)
        self.q = np.asarray(q, dtype=float) * hc.dt
        self.r = float(r) * hc.dt
        self.p = np.asarray(p, dtype=float)
        self.qi = np.asarray(qi, dtype=float) * hc.dt
        self.K = lqr_gain(self.Ad, self.Bd, np.diag(self.q), [[self.r]]).K
        self.last = CostBreakdown()

    def solve(self, x0, refs, a_ref, lo: float, hi: float, factor: float = 0.0) -> float:
        """Acceleration to apply now, inside ``[lo, hi]``."""
        N = self.hc.N
        refs = np.asarray(refs, dtype=float).reshape(N + 1, 2)
        a_ref = np.broadcast_to(np.asarray(a_ref, dtype=float), (N,)).reshape(N, 1)
        Q = np.diag(self.q + factor * self.qi)
        R = np.array([[self.r]])
        H, g, X, G = condense(self.Ad, self.Bd, Q, R, np.diag(self.p), N, 1, x0, refs,
                              np.zeros(2), np.zeros(1), a_ref, self.K)
        base = a_ref[0, 0] - float(self.K[0] @ (np.asarray(x0, dtype=float) - refs[0]))
        if lo > hi:
            lo = hi = 0.5 * (lo + hi)
        qp = BoxQP(H, g, np.array([lo - base]), np.array([hi - base]))
        z, _ = solve_box_qp(qp)
        E = X + G @ z - refs
        jx = float(np.sum(E[:-1] ** 2 @ self.q))
        ji = float(factor * np.sum(E[:-1] ** 2 @ self.qi))
        jp = float(E[-1] ** 2 @ self.p)
        d = z[0] - float(self.K[0] @ E[0])
        self.last = CostBreakdown(jx, self.r * d * d, jp, ji)
        return base + float(z[0])


class Cascade:
    """Altitude, planar and attitude loops feeding the mixer."""

    def __init__(self, p: QuadParams, w: WeightSet, hc: HorizonConfig, b: InputBounds,
                 tilt_guard: float = 0.5):
        self.p, self.hc, self.b = p, hc, b
        self.tilt_guard = tilt_guard
        q, qi, pt = w.q, w.qi, w.p
        rsum = float(np.sum(w.r))
        per_motor = p.mass / (4 * p.k_thrust)
        idx = {"z": (2, 8), "x": (0, 6), "y": (1, 7),
               "phi": (3, 9), "theta": (4, 10), "psi": (5, 11)}
        sel = {k: (q[list(v)], pt[list(v)], qi[list(v)]) for k, v in idx.items()}
        # input weights: rotor-unit penalty of the input each loop commands
        r_z = rsum * per_motor ** 2
        # a commanded tilt a/g is held over the whole horizon
        r_xy = hc.N * q[IPHI] / p.gravity ** 2
        lk = p.arm_length * p.k_thrust
        r_phi = 2 * w.r[1] * (p.ixx / (2 * lk)) ** 2
        r_theta = 2 * w.r[0] * (p.iyy / (2 * lk)) ** 2
        r_psi = rsum * (p.izz / (4 * p.b_drag)) ** 2
        self.loops = {
            "z": AxisMPC(hc, sel["z"][0], r_z, sel["z"][1], sel["z"][2]),
            "x": AxisMPC(hc, sel["x"][0], r_xy, sel["x"][1], sel["x"][2]),
            "y": AxisMPC(hc, sel["y"][0], r_xy, sel["y"][1], sel["y"][2]),
            "phi": AxisMPC(hc, sel["phi"][0], r_phi, sel["phi"][1], sel["phi"][2]),
            "theta": AxisMPC(hc, sel["theta"][0], r_theta, sel["theta"][1], sel["theta"][2]),
            "psi": AxisMPC(hc, sel["psi"][0], r_psi, sel["psi"][1], sel["psi"][2]),
        }
        self.last_setpoints: CascadeSetpoints | None = None

    def cost(self) -> CostBreakdown:
        total = CostBreakdown()
        for loop in self.loops.values():
            total = total + loop.last
        return total

    def setpoints(self, x, refs, factor: float = 0.0) -> CascadeSetpoints:
        p, dt = self.p, self.hc.dt
        x = np.asarray(x, dtype=float)
        refs = np.asarray(refs, dtype=float)
        acc_ref = np.diff(refs[:, 6:9], axis=0) / dt
        guard = self.tilt_guard
        a_lim = p.gravity * guard

        # altitude: vertical acceleration, then thrust through the current tilt
        tilt = math.cos(x[IPHI]) * math.cos(x[ITHETA])
        t_max = 4 * p.k_thrust * float(np.min(self.b.u_max))
        t_min = 4 * p.k_thrust * float(np.max(self.b.u_min))
        drag_z = p.drag[2] * x[IVZ] / p.mass
        az_lo = t_min * tilt / p.mass - p.gravity - drag_z
        az_hi = t_max * tilt / p.mass - p.gravity - drag_z
        az = self.loops["z"].solve(x[[2, 8]], refs[:, [2, 8]], acc_ref[:, 2],
                                   az_lo, az_hi, factor)
        thrust = p.mass * (az + p.gravity + drag_z) / max(tilt, 1e-3)
        thrust = min(max(thrust, t_min), t_max)

        # planar: accelerations in the world frame, tilt references in the yaw frame
        ax = self.loops["x"].solve(x[[0, 6]], refs[:, [0, 6]], acc_ref[:, 0],
                                   -a_lim, a_lim, factor)
        ay = self.loops["y"].solve(x[[1, 7]], refs[:, [1, 7]], acc_ref[:, 1],
                                   -a_lim, a_lim, factor)
        c, s = math.cos(refs[0, IPSI]), math.sin(refs[0, IPSI])
        abx, aby = c * ax + s * ay, -s * ax + c * ay
        theta_ref = min(max(abx / p.gravity, -guard), guard)
        phi_ref = min(max(-aby / p.gravity, -guard), guard)

        # attitude: angular accelerations to torques
        att_ref = np.zeros((self.hc.N + 1, 2))
        att_ref[:, 0] = phi_ref
        alpha_phi = self.loops["phi"].solve(x[[3, 9]], att_ref, 0.0, -np.inf, np.inf, factor)
        att_ref[:, 0] = theta_ref
        alpha_theta = self.loops["theta"].solve(x[[4, 10]], att_ref, 0.0, -np.inf, np.inf, factor)
        alpha_psi = self.loops["psi"].solve(x[[5, 11]], refs[:, [5, 11]], 0.0,
                                            -np.inf, np.inf, factor)
        sp = CascadeSetpoints(thrust, phi_ref, theta_ref, p.izz * alpha_psi, guard)
        self._torques = (p.ixx * alpha_phi, p.iyy * alpha_theta, p.izz * alpha_psi)
        self.last_setpoints = sp
        return sp

    def command(self, x, refs, factor: float = 0.0) -> np.ndarray:
        sp = self.setpoints(x, refs, factor)
        tau_phi, tau_theta, tau_psi = self._torques
        return mix(Wrench(sp.thrust, tau_phi, tau_theta, tau_psi), self.p, self.b)


class FlightController:
    """One stateful controller for a closed-loop run.

    ``step`` takes the measured state, the current time, the reference plan
    (N+1 states) and the feedforward plan (N inputs) and returns the input to
    hold until the next call.
    """

    def __init__(self, p: QuadParams, w: WeightSet, hc: HorizonConfig, b: InputBounds,
                 time_opt: TimeOptConfig | None = None,
                 settings: ControllerSettings | None = None):
        self.p, self.w, self.hc, self.b = p, w, hc, b
        self.settings = settings or ControllerSettings()
        self.mode = self.settings.mode
        t_o = time_opt.t_o if time_opt is not None else TimeOptConfig().t_o
        self.time_opt = TimeOptConfig(t_o=t_o, enabled=self.mode.time_optimal)
        self.model = hover_model(p, hc.dt)
        self.lqr = lqr_gain(self.model.Ad, self.model.Bd, w.Q, w.R, u0=self.model.u0)
        self.u_hover = hover_input(p)
        self.last_cost = CostBreakdown()
        clip = self.settings.pos_clip
        m = self.mode
        if m is ControllerMode.MONOLITHIC_LMPC:
            self._impl = LinearMPC(self.model, w, hc, b, gain=self.lqr.K, pos_clip=clip)
        elif m in (ControllerMode.MONOLITHIC_NMPC, ControllerMode.MONOLITHIC_IMPC):
            self._impl = NonlinearMPC(w, hc, b, p, self.time_opt, gain=self.lqr.K,
                                      pos_clip=clip, max_iter=self.settings.max_iter)
        elif m in (ControllerMode.CASCADE_NMPC, ControllerMode.CASCADE_IMPC):
            self._impl = Cascade(p, w, hc, b, self.settings.tilt_guard)
        else:
            self._impl = None

    def step(self, x, t_now: float, refs, u_ref, u_prev) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        refs = np.asarray(refs, dtype=float)
        u_ref = np.asarray(u_ref, dtype=float).reshape(self.hc.N, NU)
        u_prev = np.asarray(u_prev, dtype=float)
        if refs.shape != (self.hc.N + 1, NX):
            raise ValueError(f"refs must have shape ({self.hc.N + 1}, {NX})")
        m = self.mode
        if m is ControllerMode.MONOLITHIC_LMPC:
            u = self._impl.step(x, refs, u_prev, u_ref)
            self.last_cost = self._impl.last.cost
        elif m in (ControllerMode.MONOLITHIC_NMPC, ControllerMode.MONOLITHIC_IMPC):
            u = self._impl.step(x, t_now, refs, u_ref, u_prev)
            self.last_cost = self._impl.last.cost
        elif m in (ControllerMode.CASCADE_NMPC, ControllerMode.CASCADE_IMPC):
            factor = 0.0
            if self.time_opt.enabled:
                factor = time_factor(t_now, self.time_opt.t_o, self.w.alpha)
            u = self._impl.command(x, refs, factor)
            self.last_cost = self._impl.cost()
        else:
            e = saturated_error(x, refs[0], self.settings.pos_clip)
            u = u_ref[0] - self.lqr.K @ e
            self.last_cost = CostBreakdown(float(e @ self.w.Q @ e),
                                           float((u - u_ref[0]) @ self.w.R @ (u - u_ref[0])))
        return rate_limit(u_prev, u, self.b.du_max, self.b)
