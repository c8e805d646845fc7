"""Moving-target scenario and the full-state reference built from it.

The target only prescribes position. The remaining reference states (tilt,
rates) and the feedforward input are recovered from the target's velocity and
acceleration so that the reference is an exact trajectory of the plant model:
a controller sitting on the reference with the feedforward input stays on it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from quadmpc.dynamics import NU, NX, QuadParams, allocation_matrix

_H1 = 1e-5
_H2 = 1e-4


@dataclass(frozen=True)
class Scenario:
    radius: float = 5.0
    period: float = 5.0
    altitude: float = 0.5
    duration: float = 10.0
    plant_dt: float = 0.01
    ctrl_dt: float = 0.05
    initial_state: tuple = (0.0,) * NX
    external_force: tuple = (0.0, 0.0, 0.0)
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "initial_state", tuple(float(v) for v in self.initial_state))
        object.__setattr__(self, "external_force", tuple(float(v) for v in self.external_force))
        if len(self.initial_state) != NX:
            raise ValueError("initial_state must have 12 entries")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        if not (self.plant_dt > 0 and self.ctrl_dt > 0 and self.period > 0):
            raise ValueError("plant_dt, ctrl_dt and period must be positive")
        if self.radius < 0:
            raise ValueError("radius must be non-negative")
        if self.substeps is None:
            raise ValueError("ctrl_dt must be an integer multiple of plant_dt")

    @property
    def substeps(self) -> int | None:
        ratio = self.ctrl_dt / self.plant_dt
        n = round(ratio)
        return n if n >= 1 and abs(ratio - n) < 1e-9 * max(1.0, ratio) else None

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["initial_state"] = list(self.initial_state)
        d["external_force"] = list(self.external_force)
        return d


def target_at(t: float, sc: Scenario) -> np.ndarray:
    """Target position on the horizontal circle."""
    w = 2 * math.pi / sc.period
    return np.array([sc.radius * math.cos(w * t), sc.radius * math.sin(w * t), sc.altitude])


def target_velocity(t: float, sc: Scenario) -> np.ndarray:
    w = 2 * math.pi / sc.period
    return np.array([-sc.radius * w * math.sin(w * t), sc.radius * w * math.cos(w * t), 0.0])


def target_acceleration(t: float, sc: Scenario) -> np.ndarray:
    w = 2 * math.pi / sc.period
    return -w * w * np.array([sc.radius * math.cos(w * t), sc.radius * math.sin(w * t), 0.0])


@dataclass
class Reference:
    """Full-state reference and feedforward input for a scenario."""

    scenario: Scenario
    params: QuadParams
    _alloc_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._alloc_inv = np.linalg.inv(allocation_matrix(self.params))

    def _force(self, t):
        p, sc = self.params, self.scenario
        acc = target_acceleration(t, sc)
        acc[2] += p.gravity
        return (p.mass * acc + np.asarray(p.drag) * target_velocity(t, sc)
                - np.asarray(sc.external_force))

    def _tilt(self, t):
        f = self._force(t)
        n = f / np.linalg.norm(f)
        c, s = math.cos(self.scenario.yaw), math.sin(self.scenario.yaw)
        # express in the yaw-aligned frame, then invert the ZYX body z axis
        nx, ny = c * n[0] + s * n[1], -s * n[0] + c * n[1]
        phi = math.asin(max(-1.0, min(1.0, -ny)))
        theta = math.atan2(nx, n[2])
        return np.array([phi, theta])

    def state(self, t: float) -> np.ndarray:
        sc = self.scenario
        ang = self._tilt(t)
        rate = (self._tilt(t + _H1) - self._tilt(t - _H1)) / (2 * _H1)
        x = np.zeros(NX)
        x[0:3] = target_at(t, sc)
        x[3:5] = ang
        x[5] = sc.yaw
        x[6:9] = target_velocity(t, sc)
        x[9:11] = rate
        return x

    def input(self, t: float) -> np.ndarray:
        p = self.params
        thrust = float(np.linalg.norm(self._force(t)))
        rate = (self._tilt(t + _H1) - self._tilt(t - _H1)) / (2 * _H1)
        acc = (self._tilt(t + _H2) - 2 * self._tilt(t) + self._tilt(t - _H2)) / _H2**2
        tau_phi = p.ixx * acc[0]
        tau_theta = p.iyy * acc[1]
        tau_psi = (p.iyy - p.ixx) * rate[0] * rate[1]
        return self._alloc_inv @ np.array([thrust, tau_phi, tau_theta, tau_psi])

    def plan(self, t0: float, N: int, dt: float):
        """States at ``t0 + k dt`` for k = 0..N and inputs for k = 0..N-1."""
        times = t0 + dt * np.arange(N + 1)
        states = np.array([self.state(t) for t in times])
        inputs = np.array([self.input(t) for t in times[:-1]]).reshape(N, NU)
        return states, inputs
