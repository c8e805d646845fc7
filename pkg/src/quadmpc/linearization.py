"""Hover linearization, series discretization and the discrete LQR baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from quadmpc.dynamics import NU, NX, QuadParams, derivative, hover_input

FD_STEP = 1e-6


class RiccatiNotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    Ad: np.ndarray
    Bd: np.ndarray
    Vd: np.ndarray
    dt: float
    x0: np.ndarray
    u0: np.ndarray


@dataclass(frozen=True)
class LqrGain:
    K: np.ndarray
    u0: np.ndarray
    P: np.ndarray
    iterations: int


def linearize(x0, u0, p: QuadParams, h: float = FD_STEP):
    """Central finite-difference Jacobians ``(A, B)`` of the plant derivative."""
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    A = np.empty((NX, NX))
    B = np.empty((NX, NU))
    for j in range(NX):
        dx = np.zeros(NX)
        dx[j] = h
        A[:, j] = (derivative(x0 + dx, u0, p) - derivative(x0 - dx, u0, p)) / (2 * h)
    for j in range(NU):
        du = np.zeros(NU)
        du[j] = h
        B[:, j] = (derivative(x0, u0 + du, p) - derivative(x0, u0 - du, p)) / (2 * h)
    # kinematic rows are exact passthroughs
    A[:6, :] = 0.0
    A[:6, 6:] = np.eye(6)
    B[:6, :] = 0.0
    return A, B


def disturbance_gain(p: QuadParams) -> np.ndarray:
    """Continuous-time map from a world-frame force to the state derivative."""
    V = np.zeros((NX, 3))
    V[6:9, :] = np.eye(3) / p.mass
    return V


def discretize(A, B, Vd_cont, dt: float):
    """Four-term series for ``exp(A dt)`` and the matching input integrals."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    I = np.eye(n)
    A2 = A @ A
    A3 = A2 @ A
    A4 = A3 @ A
    Ad = I + A * dt + A2 * dt**2 / 2 + A3 * dt**3 / 6 + A4 * dt**4 / 24
    S = I * dt + A * dt**2 / 2 + A2 * dt**3 / 6 + A3 * dt**4 / 24
    Bd = S @ np.asarray(B, dtype=float)
    Vd = S @ np.asarray(Vd_cont, dtype=float) if Vd_cont is not None else None
    return Ad, Bd, Vd


def hover_model(p: QuadParams, dt: float) -> LinearModel:
    x0 = np.zeros(NX)
    u0 = hover_input(p)
    A, B = linearize(x0, u0, p)
    Ad, Bd, Vd = discretize(A, B, disturbance_gain(p), dt)
    return LinearModel(A, B, Ad, Bd, Vd, dt, x0, u0)


def lqr_gain(Ad, Bd, Q, R, tol: float = 1e-9, max_iter: int = 10_000,
             u0=None, trace: list | None = None) -> LqrGain:
    """Discrete LQR by value iteration of the Riccati recursion from P = 0.

    ``K`` is returned for the law ``u = u0 - K (x - x_ref)``.
    """
    Ad = np.atleast_2d(np.asarray(Ad, dtype=float))
    Bd = np.atleast_2d(np.asarray(Bd, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = np.zeros_like(Q)
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        BtP = Bd.T @ P
        K = np.linalg.solve(R + BtP @ Bd, BtP @ Ad)
        P_new = Q + Ad.T @ P @ Ad - Ad.T @ P @ Bd @ K
        P_new = 0.5 * (P_new + P_new.T)
        residual = np.max(np.abs(P_new - P))
        P = P_new
        if trace is not None:
            trace.append(float(np.trace(P)))
        if residual < tol:
            break
    else:
        if residual >= 1e-6:
            raise RiccatiNotConverged(
                f"Riccati iteration hit {max_iter} iterations, residual {residual:.3g}")
    BtP = Bd.T @ P
    K = np.linalg.solve(R + BtP @ Bd, BtP @ Ad)
    u0 = np.zeros(Bd.shape[1]) if u0 is None else np.asarray(u0, dtype=float)
    return LqrGain(K, u0, P, it)


def saturated_error(x, x_ref, pos_clip: float = np.inf) -> np.ndarray:
    """State error with its position part clipped to +-pos_clip."""
    e = np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)
    e[:3] = np.clip(e[:3], -pos_clip, pos_clip)
    return e


def lqr_input(gain: LqrGain, x, x_ref, u_ref=None, pos_clip: float = np.inf) -> np.ndarray:
    """Unclamped LQR law ``u_ref - K e`` on the saturated error."""
    u_ref = gain.u0 if u_ref is None else np.asarray(u_ref, dtype=float)
    return u_ref - gain.K @ saturated_error(x, x_ref, pos_clip)
