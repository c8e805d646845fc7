"""Condensed linear MPC around the hover point.

Predicted states are eliminated through the prediction matrices so the only
decision variables are the ``N_u`` input moves (deviations from the hover
input); moves past the control horizon repeat the last free one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from quadmpc.costs import CostBreakdown, TimeOptConfig, WeightSet, total_cost
from quadmpc.dynamics import NU, NX
from quadmpc.linearization import LinearModel
from quadmpc.qp import BoxQP, QPStatus, solve_box_qp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HorizonConfig:
    N: int = 18
    N_u: int = 1
    dt: float = 0.05

    def __post_init__(self):
        if not 1 <= self.N_u <= self.N:
            raise ValueError("need 1 <= N_u <= N")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def T(self) -> float:
        return self.N * self.dt


@dataclass(frozen=True)
class InputBounds:
    u_min: np.ndarray = field(default_factory=lambda: np.zeros(NU))
    u_max: np.ndarray = field(default_factory=lambda: np.full(NU, 5.0))
    du_max: np.ndarray = field(default_factory=lambda: np.ones(NU))

    def __post_init__(self):
        for name in ("u_min", "u_max", "du_max"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (NU,))
            object.__setattr__(self, name, v.copy())
        if np.any(self.u_min > self.u_max):
            raise ValueError("u_min must not exceed u_max")
        if np.any(self.du_max < 0):
            raise ValueError("du_max must be non-negative")

    def first_move_box(self, u_prev):
        """Intersection of the magnitude box and the rate box around ``u_prev``.

        Returns ``(lo, hi, conflict)``; on an empty intersection the magnitude
        box is returned and ``conflict`` is True.
        """
        if u_prev is None:
            return self.u_min.copy(), self.u_max.copy(), False
        u_prev = np.asarray(u_prev, dtype=float)
        lo = np.maximum(self.u_min, u_prev - self.du_max)
        hi = np.minimum(self.u_max, u_prev + self.du_max)
        if np.any(lo > hi):
            return self.u_min.copy(), self.u_max.copy(), True
        return lo, hi, False


def move_blocking(N: int, N_u: int, nu: int = NU) -> np.ndarray:
    """Selector ``S`` (N*nu x N_u*nu) mapping free moves to all N inputs."""
    S = np.zeros((N * nu, N_u * nu))
    for k in range(N):
        j = min(k, N_u - 1)
        S[k * nu:(k + 1) * nu, j * nu:(j + 1) * nu] = np.eye(nu)
    return S


def prediction_matrices(Ad, Bd, N: int, N_u: int):
    """``X = Phi x0 + Gamma z`` for stacked stages 0..N."""
    nx, nu = Bd.shape
    Phi = np.empty(((N + 1) * nx, nx))
    Gu = np.zeros(((N + 1) * nx, N * nu))
    Ak = np.eye(nx)
    for k in range(N + 1):
        Phi[k * nx:(k + 1) * nx] = Ak
        Ak = Ad @ Ak
    for k in range(1, N + 1):
        # x_k depends on u_j for j < k through Ad^(k-1-j) Bd
        Gu[k * nx:(k + 1) * nx, :(k - 1) * nu] = Ad @ Gu[(k - 1) * nx:k * nx, :(k - 1) * nu]
        Gu[k * nx:(k + 1) * nx, (k - 1) * nu:k * nu] = Bd
    return Phi, Gu @ move_blocking(N, N_u, nu)


def stacked_weights(w: WeightSet, N: int, N_u: int):
    """Block-diagonal ``Q_bar`` over stages 0..N-1 and ``R_bar`` over the free moves."""
    return np.kron(np.eye(N), w.Q), np.kron(np.eye(N_u), w.R)


def condense(Ad, Bd, Q, R, P, N: int, N_u: int, x0, refs, x_op, u_op,
             u_base=None, gain=None):
    """Affine prediction and quadratic cost of the held correction moves.

    The input along the horizon is ``u_k = u_base_k + v_j - K (x_k - r_k)`` with
    ``j = min(k, N_u - 1)``; with ``K = 0`` and ``u_base = u_op`` the moves are
    plain move-blocked deviations from the operating input. Returns
    ``(H, g, X_free, G)`` where the predicted deviation states are
    ``X_free + G v`` (stages 0..N) and the cost is ``v'Hv + 2 g'v + const``,
    so the box QP ``v'Hv/2 + g'v`` has the same minimizer.
    """
    Ad = np.atleast_2d(np.asarray(Ad, dtype=float))
    Bd = np.atleast_2d(np.asarray(Bd, dtype=float))
    nx, nu = Bd.shape
    refs = np.asarray(refs, dtype=float).reshape(N + 1, nx)
    x_op = np.asarray(x_op, dtype=float)
    u_op = np.asarray(u_op, dtype=float)
    K = np.zeros((nu, nx)) if gain is None else np.asarray(gain, dtype=float)
    if u_base is None:
        u_base = np.tile(u_op, (N, 1))
    u_base = np.asarray(u_base, dtype=float).reshape(N, nu)
    nv = N_u * nu
    Acl = Ad - Bd @ K
    dref = refs - x_op
    X = np.empty((N + 1, nx))
    G = np.zeros((N + 1, nx, nv))
    X[0] = np.asarray(x0, dtype=float) - x_op
    for k in range(N):
        j = min(k, N_u - 1)
        X[k + 1] = Acl @ X[k] + Bd @ (u_base[k] - u_op + K @ dref[k])
        G[k + 1] = Acl @ G[k]
        G[k + 1][:, j * nu:(j + 1) * nu] += Bd
    H = np.zeros((nv, nv))
    g = np.zeros(nv)
    for k in range(N + 1):
        W = P if k == N else Q
        e = X[k] - dref[k]
        H += G[k].T @ W @ G[k]
        g += G[k].T @ W @ e
    # input penalty on the applied deviation from u_base over the free moves
    for k in range(N_u):
        D = -K @ G[k]
        D[:, k * nu:(k + 1) * nu] += np.eye(nu)
        d = -K @ (X[k] - dref[k])
        H += D.T @ R @ D
        g += D.T @ R @ d
    return 0.5 * (H + H.T), g, X, G


@dataclass
class CondensedQP:
    qp: BoxQP
    X_free: np.ndarray
    G: np.ndarray
    base: np.ndarray
    rate_conflict: bool
    first_lo: np.ndarray
    first_hi: np.ndarray

    def predicted(self, z) -> np.ndarray:
        """Predicted deviation states (N+1 x nx) for moves ``z``."""
        return self.X_free + self.G @ np.asarray(z, dtype=float)


def build_condensed(model: LinearModel, w: WeightSet, hc: HorizonConfig, x0,
                    refs, u_prev, b: InputBounds, u_ref=None, gain=None,
                    pos_clip: float = np.inf) -> CondensedQP:
    """Box QP over the N_u correction moves.

    Without ``gain`` and ``u_ref`` the decision is the stacked deviation of the
    free inputs from the hover input. A finite ``pos_clip`` pulls every
    reference position to within that distance (per axis) of the current
    position, which keeps the linear prediction of the feedback honest far
    from the target.
    """
    refs = np.asarray(refs, dtype=float)
    nx, nu = model.Bd.shape
    if refs.shape != (hc.N + 1, nx):
        raise ValueError(f"refs must have shape ({hc.N + 1}, {nx}), got {refs.shape}")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (nx,):
        raise ValueError(f"x0 must have shape ({nx},)")
    if np.isfinite(pos_clip):
        refs = refs.copy()
        refs[:, :3] = x0[:3] + np.clip(refs[:, :3] - x0[:3], -pos_clip, pos_clip)
    if u_ref is None:
        u_base = np.tile(model.u0, (hc.N, 1))
    else:
        u_base = np.asarray(u_ref, dtype=float).reshape(hc.N, nu)
    K = np.zeros((nu, nx)) if gain is None else np.asarray(gain, dtype=float)
    H, g, X, G = condense(model.Ad, model.Bd, w.Q, w.R, w.P, hc.N, hc.N_u, x0, refs,
                          model.x0, model.u0, u_base, K)
    e0 = x0 - refs[0]
    base = u_base[:hc.N_u].copy()
    base[0] = u_base[0] - K @ e0
    lo, hi, conflict = b.first_move_box(u_prev)
    if conflict:
        log.warning("rate box does not intersect magnitude box; using magnitude box")
    lb = (b.u_min - base).ravel()
    ub = (b.u_max - base).ravel()
    lb[:nu] = lo - base[0]
    ub[:nu] = hi - base[0]
    return CondensedQP(BoxQP(H, g, lb, ub), X, G, base, conflict, lo, hi)


@dataclass
class LmpcSolution:
    u: np.ndarray
    status: QPStatus
    moves: np.ndarray
    cost: CostBreakdown
    rate_conflict: bool


def solve_lmpc(x, refs, u_prev, model: LinearModel, w: WeightSet,
               hc: HorizonConfig, b: InputBounds, warm=None, u_ref=None,
               gain=None, pos_clip: float = np.inf) -> LmpcSolution:
    cq = build_condensed(model, w, hc, x, refs, u_prev, b, u_ref, gain, pos_clip)
    z, status = solve_box_qp(cq.qp, x0=warm)
    u = np.clip(cq.base[0] + z[:NU], cq.first_lo, cq.first_hi)
    X = cq.predicted(z) + model.x0
    K = np.zeros((NU, NX)) if gain is None else np.asarray(gain, dtype=float)
    applied = z.reshape(hc.N_u, NU) - (X[:hc.N_u] - refs[:hc.N_u]) @ K.T
    cost = total_cost(X, applied, refs, w, 0.0, TimeOptConfig(enabled=False))
    return LmpcSolution(u, status, z, cost, cq.rate_conflict)


def lmpc_step(x, refs, u_prev, model: LinearModel, w: WeightSet,
              hc: HorizonConfig, b: InputBounds, u_ref=None, gain=None,
              pos_clip: float = np.inf) -> np.ndarray:
    """First input of the condensed QP solution, inside the magnitude and rate boxes."""
    return solve_lmpc(x, refs, u_prev, model, w, hc, b, None, u_ref, gain, pos_clip).u


class LinearMPC:
    """Stateful wrapper keeping the previous solution as warm start."""

    def __init__(self, model: LinearModel, w: WeightSet, hc: HorizonConfig,
                 b: InputBounds, gain=None, pos_clip: float = np.inf):
        self.model, self.w, self.hc, self.b = model, w, hc, b
        self.gain = gain
        self.pos_clip = pos_clip
        self._warm = None
        self.last: LmpcSolution | None = None

    def step(self, x, refs, u_prev, u_ref=None) -> np.ndarray:
        sol = solve_lmpc(x, refs, u_prev, self.model, self.w, self.hc, self.b,
                         self._warm, u_ref, self.gain, self.pos_clip)
        self._warm = sol.moves
        self.last = sol
        return sol.u
