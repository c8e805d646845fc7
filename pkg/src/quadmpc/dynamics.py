"""Quadrotor rigid-body plant.

State vector (12 entries, fixed order)::

    [x, y, z, phi, theta, psi, vx, vy, vz, phi_dot, theta_dot, psi_dot]

Positions and velocities are world frame; Euler angles are ZYX and kept
unwrapped. The input is four normalized squared rotor speeds in [0, 5].

The attitude model drives the Euler-angle rates directly through the
diagonal inertia with gyroscopic cross terms, which is adequate in the
small-angle regime the controllers operate in.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from quadmpc import _kernels

NX = 12
NU = 4

# Named state indices.
IX, IY, IZ = 0, 1, 2
IPHI, ITHETA, IPSI = 3, 4, 5
IVX, IVY, IVZ = 6, 7, 8
IP, IQ, IR = 9, 10, 11

STATE_NAMES = ("x", "y", "z", "phi", "theta", "psi",
               "vx", "vy", "vz", "p", "q", "r")


class SingularityError(ArithmeticError):
    """Pitch reached the Euler-angle singularity."""


@dataclass(frozen=True)
class QuadParams:
    """Physical constants. ``k_thrust`` defaults to hover at mid-range input."""

    mass: float = 0.468
    arm_length: float = 0.225
    ixx: float = 4.856e-3
    iyy: float = 4.856e-3
    izz: float = 8.801e-3
    k_thrust: float = 0.468 * 9.81 / 10.0
    b_drag: float = 0.01
    gravity: float = 9.81
    drag: tuple[float, float, float] = (0.01, 0.01, 0.01)

    def __post_init__(self):
        positive = ("mass", "arm_length", "ixx", "iyy", "izz",
                    "k_thrust", "b_drag", "gravity")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if len(self.drag) != 3 or min(self.drag) < 0:
            raise ValueError("drag must be three non-negative coefficients")
        object.__setattr__(self, "drag", tuple(float(c) for c in self.drag))

    @classmethod
    def from_dict(cls, d: dict) -> "QuadParams":
        d = dict(d)
        if "drag" in d:
            d["drag"] = tuple(d["drag"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["drag"] = list(self.drag)
        return d

    def as_array(self) -> np.ndarray:
        return np.array([self.mass, self.arm_length, self.ixx, self.iyy,
                         self.izz, self.k_thrust, self.b_drag, self.gravity,
                         *self.drag])

    @property
    def inertia(self) -> np.ndarray:
        return np.array([self.ixx, self.iyy, self.izz])


@dataclass(frozen=True)
class Wrench:
    thrust: float
    tau_phi: float
    tau_theta: float
    tau_psi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.thrust, self.tau_phi, self.tau_theta, self.tau_psi])


def allocation_matrix(p: QuadParams) -> np.ndarray:
    """Map squared rotor speeds to (T, tau_phi, tau_theta, tau_psi)."""
    k, l, b = p.k_thrust, p.arm_length, p.b_drag
    return np.array([
        [k, k, k, k],
        [0.0, -l * k, 0.0, l * k],
        [-l * k, 0.0, l * k, 0.0],
        [b, -b, b, -b],
    ])


def allocate(u, p: QuadParams) -> Wrench:
    """Cross-configuration mixer: rotor inputs to body wrench."""
    return Wrench(*(allocation_matrix(p) @ np.asarray(u, dtype=float)))


def hover_input(p: QuadParams) -> np.ndarray:
    """Equal per-rotor input whose total thrust balances weight."""
    return np.full(NU, p.mass * p.gravity / (4.0 * p.k_thrust))


def _as_state(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (NX,):
        raise ValueError(f"state must have shape ({NX},), got {x.shape}")
    return x


def derivative(x, u, p: QuadParams, f_ext=None) -> np.ndarray:
    """Time derivative of the 12-state; raises SingularityError near |theta| = pi/2."""
    x = _as_state(x)
    fe = np.zeros(3) if f_ext is None else np.asarray(f_ext, dtype=float)
    out = np.empty(NX)
    if not _kernels.deriv(x, np.asarray(u, dtype=float), p.as_array(), fe, out):
        raise SingularityError(f"pitch {x[ITHETA]:.6f} rad at Euler singularity")
    return out


def step_rk4(x, u, p: QuadParams, f_ext=None, dt: float = 0.01) -> np.ndarray:
    """One classical RK4 step with ``u`` held constant."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = _as_state(x)
    fe = np.zeros(3) if f_ext is None else np.asarray(f_ext, dtype=float)
    out = np.empty(NX)
    if not _kernels.rk4(x, np.asarray(u, dtype=float), p.as_array(), fe, dt, out):
        raise SingularityError("Euler singularity inside RK4 step")
    return out


def body_z_axis(phi: float, theta: float, psi: float) -> np.ndarray:
    """World-frame direction of the body z axis (ZYX convention)."""
    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cpsi, spsi = math.cos(psi), math.sin(psi)
    return np.array([cphi * sth * cpsi + sphi * spsi,
                     cphi * sth * spsi - sphi * cpsi,
                     cphi * cth])
