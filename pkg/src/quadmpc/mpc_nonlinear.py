"""Nonlinear MPC by single shooting on the full plant model.

Inside the horizon the input at step k is::

    u_k = clip(u_ref_k + v_j - K (x_k - x_ref_k)),   j = min(k, N_u - 1)

where ``v`` are the ``N_u`` free correction moves (the last one is held to the
end of the horizon), ``u_ref`` is the input reference plan and ``K`` an
optional prediction feedback gain. With ``K = 0`` and ``u_ref = 0`` the moves
are plain move-blocked inputs. Enabling the time-optimal term turns the
standard controller into the improved one (IMPC).

Stage weights are multiplied by ``dt`` so the sum approximates the
continuous-time integral; the terminal weight is not.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from quadmpc import _kernels
from quadmpc.costs import CostBreakdown, TimeOptConfig, WeightSet, time_factor
from quadmpc.dynamics import NU, NX, QuadParams, SingularityError
from quadmpc.linearization import saturated_error
from quadmpc.mpc_linear import HorizonConfig, InputBounds

FD_STEP = 1e-5
PG_TOL = 1e-6
MAX_ITER = 200
MAX_HALVINGS = 30


class SolveStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    LINE_SEARCH = "line_search_stalled"
    SINGULAR = "singular"


def rollout(x0, U, p: QuadParams, dt: float, N: int, f_ext=None) -> np.ndarray:
    """Integrate ``N`` RK4 steps under move-blocked inputs ``U`` (N_u x 4)."""
    x0 = np.asarray(x0, dtype=float)
    if N == 0:
        return x0[None, :].copy()
    U = np.atleast_2d(np.asarray(U, dtype=float))
    inputs = U[np.minimum(np.arange(N), U.shape[0] - 1)]
    states = np.empty((N + 1, NX))
    fe = np.zeros(3) if f_ext is None else np.asarray(f_ext, dtype=float)
    k = _kernels.rollout(x0, np.ascontiguousarray(inputs), p.as_array(), fe, dt, states)
    if k >= 0:
        raise SingularityError(f"Euler singularity during rollout at step {k}")
    return states


class _Problem:
    """Bundles the fixed arguments of one solve for the compiled kernels."""

    def __init__(self, x0, refs, w: WeightSet, hc: HorizonConfig, t_now: float,
                 cfg: TimeOptConfig, p: QuadParams, u_ref=None,
                 b: InputBounds | None = None, f_ext=None, gain=None,
                 pos_clip: float = np.inf):
        self.hc = hc
        self.pos_clip = float(pos_clip)
        self.x0 = np.ascontiguousarray(x0, dtype=float)
        self.refs = np.ascontiguousarray(refs, dtype=float)
        if self.refs.shape != (hc.N + 1, NX):
            raise ValueError(f"refs must have shape ({hc.N + 1}, {NX}), got {self.refs.shape}")
        if u_ref is None:
            u_ref = np.zeros((hc.N, NU))
        u_ref = np.asarray(u_ref, dtype=float)
        if u_ref.ndim == 1:
            u_ref = np.tile(u_ref, (hc.N, 1))
        self.u_ref = np.ascontiguousarray(u_ref[:hc.N])
        self.gain = np.zeros((NU, NX)) if gain is None else np.ascontiguousarray(gain, dtype=float)
        if b is None:
            self.u_min = np.full(NU, -np.inf)
            self.u_max = np.full(NU, np.inf)
        else:
            self.u_min, self.u_max = b.u_min, b.u_max
        self.prm = p.as_array()
        self.fe = np.zeros(3) if f_ext is None else np.asarray(f_ext, dtype=float)
        w = w.scaled_stage(hc.dt)
        self.q, self.r, self.p = w.q, w.r, w.p
        self.qi = w.qi if cfg.enabled else np.zeros(NX)
        self.factor = time_factor(t_now, cfg.t_o, w.alpha) if cfg.enabled else 0.0
        self._parts = np.empty(4)

    def _args(self):
        return (self.x0, self.refs, self.u_ref, self.gain, self.pos_clip,
                self.u_min, self.u_max,
                self.prm, self.fe, self.hc.dt, self.q, self.r, self.p, self.qi,
                self.factor)

    def f(self, moves) -> float:
        return _kernels.objective(moves, *self._args(), self._parts)

    def breakdown(self, moves) -> CostBreakdown:
        _kernels.objective(moves, *self._args(), self._parts)
        return CostBreakdown(*self._parts)

    def grad(self, moves, h=FD_STEP) -> np.ndarray:
        g = np.empty_like(moves)
        _kernels.objective_grad(moves, *self._args(), h, g)
        return g

    def feedforward0(self) -> np.ndarray:
        """First-step input before the correction move is added."""
        return self.u_ref[0] - self.gain @ saturated_error(self.x0, self.refs[0], self.pos_clip)

    def trajectory(self, moves):
        states = np.empty((self.hc.N + 1, NX))
        inputs = np.empty((self.hc.N, NU))
        k = _kernels.closed_loop_rollout(
            moves, self.x0, self.refs, self.u_ref, self.gain, self.pos_clip, self.u_min,
            self.u_max, self.prm, self.fe, self.hc.dt, states, inputs)
        if k >= 0:
            raise SingularityError(f"Euler singularity during rollout at step {k}")
        return states, inputs


def _moves(U, hc):
    moves = np.ascontiguousarray(np.atleast_2d(np.asarray(U, dtype=float)))
    if moves.shape != (hc.N_u, NU):
        raise ValueError(f"U must have shape ({hc.N_u}, {NU}), got {moves.shape}")
    return moves


def nmpc_objective(U, x0, refs, w: WeightSet, hc: HorizonConfig, t_now: float,
                   cfg: TimeOptConfig, p: QuadParams, u_ref=None,
                   b: InputBounds | None = None, f_ext=None, gain=None,
                   pos_clip: float = np.inf) -> CostBreakdown:
    """Cost breakdown of the correction moves ``U`` (N_u x 4)."""
    prob = _Problem(x0, refs, w, hc, t_now, cfg, p, u_ref, b, f_ext, gain, pos_clip)
    c = prob.breakdown(_moves(U, hc))
    if not np.isfinite(c.total):
        raise SingularityError("Euler singularity during rollout")
    return c


def nmpc_gradient(U, x0, refs, w, hc, t_now, cfg, p, u_ref=None, b=None,
                  f_ext=None, gain=None, pos_clip=np.inf, h: float = FD_STEP) -> np.ndarray:
    """The finite-difference gradient the solver uses."""
    prob = _Problem(x0, refs, w, hc, t_now, cfg, p, u_ref, b, f_ext, gain, pos_clip)
    return prob.grad(_moves(U, hc), h)


def predicted_trajectory(U, x0, refs, hc, p, u_ref=None, b=None, f_ext=None,
                         gain=None, pos_clip=np.inf):
    """States (N+1) and inputs (N) the objective sees for moves ``U``."""
    prob = _Problem(x0, refs, WeightSet(), hc, 0.0, TimeOptConfig(), p, u_ref, b,
                    f_ext, gain, pos_clip)
    return prob.trajectory(_moves(U, hc))


@dataclass
class NmpcSolution:
    u: np.ndarray
    moves: np.ndarray
    cost: CostBreakdown
    iterations: int
    status: SolveStatus
    warm_cost: float


def move_box(hc: HorizonConfig, b: InputBounds, base, u_prev):
    """Bounds on the correction moves.

    ``base`` is the input each move is added to (N_u x 4). The first move is
    confined to the magnitude box intersected with the rate box, the others to
    the magnitude box.
    """
    base = np.atleast_2d(np.asarray(base, dtype=float))
    lo = b.u_min - base
    hi = b.u_max - base
    flo, fhi, _ = b.first_move_box(u_prev)
    lo[0] = flo - base[0]
    hi[0] = fhi - base[0]
    return lo, hi


def projected_gradient(f, grad, z0, lo, hi, tol=PG_TOL, max_iter=MAX_ITER,
                       max_halvings=MAX_HALVINGS, history=None):
    """Projected gradient with BB trial steps and halving backtracking.

    Returns ``(z, fz, iterations, status)``. Every accepted step satisfies an
    Armijo decrease, so ``fz <= f(proj(z0))``. ``history`` collects accepted
    objective values when given.
    """
    z = np.clip(z0, lo, hi)
    fz = f(z)
    if not np.isfinite(fz):
        return z, fz, 0, SolveStatus.SINGULAR
    g = grad(z)
    gmax = np.max(np.abs(g))
    step = 1.0 / gmax if gmax > 1.0 else 1.0
    if history is not None:
        history.append(fz)
    for it in range(max_iter):
        if not np.all(np.isfinite(g)):
            return z, fz, it, SolveStatus.SINGULAR
        if np.linalg.norm(z - np.clip(z - g, lo, hi)) < tol:
            return z, fz, it, SolveStatus.CONVERGED
        t = step
        for _ in range(max_halvings + 1):
            z_new = np.clip(z - t * g, lo, hi)
            f_new = f(z_new)
            if f_new < fz and f_new <= fz + 1e-4 * np.sum(g * (z_new - z)):
                break
            t *= 0.5
        else:
            return z, fz, it, SolveStatus.LINE_SEARCH
        g_new = grad(z_new)
        s = (z_new - z).ravel()
        y = (g_new - g).ravel()
        sy = s @ y
        step = (s @ s) / sy if sy > 0 else 2.0 * t
        step = min(max(step, 1e-10), 1e3)
        z, fz, g = z_new, f_new, g_new
        if history is not None:
            history.append(fz)
    return z, fz, max_iter, SolveStatus.MAX_ITERATIONS


def solve_nmpc(x0, refs, u_warm, w: WeightSet, hc: HorizonConfig, b: InputBounds,
               t_now: float, cfg: TimeOptConfig, p: QuadParams, u_ref=None,
               u_prev=None, f_ext=None, gain=None, pos_clip: float = np.inf,
               warm_moves=None, max_iter: int = MAX_ITER, history=None) -> NmpcSolution:
    """One receding-horizon solve; returns the first input and the full solution.

    ``u_warm`` holds absolute inputs for the N_u free moves; ``warm_moves``
    (corrections) takes precedence when given. The first input is confined to
    the rate box around ``u_prev`` when given.
    """
    prob = _Problem(x0, refs, w, hc, t_now, cfg, p, u_ref, b, f_ext, gain, pos_clip)
    base = np.tile(prob.feedforward0(), (hc.N_u, 1))
    base[1:] = prob.u_ref[1:hc.N_u]
    lo, hi = move_box(hc, b, base, u_prev)
    if warm_moves is not None:
        z0 = np.atleast_2d(np.asarray(warm_moves, dtype=float))
    else:
        warm = np.atleast_2d(np.asarray(u_warm, dtype=float))
        if warm.shape[0] == 1 and hc.N_u > 1:
            warm = np.tile(warm, (hc.N_u, 1))
        z0 = warm - base
    z0 = np.ascontiguousarray(np.clip(z0, lo, hi))
    if not np.isfinite(prob.f(z0)):
        # warm start unusable; restart from the feedforward plan
        z0 = np.ascontiguousarray(np.clip(np.zeros_like(z0), lo, hi))
    warm_cost = prob.f(z0)
    z, fz, iters, status = projected_gradient(prob.f, prob.grad, z0, lo, hi,
                                              max_iter=max_iter, history=history)
    flo, fhi, _ = b.first_move_box(u_prev)
    u = np.clip(base[0] + z[0], flo, fhi)
    return NmpcSolution(u, z, prob.breakdown(z), iters, status, warm_cost)


class NonlinearMPC:
    """Receding-horizon controller; keeps its last moves as the next warm start."""

    def __init__(self, w: WeightSet, hc: HorizonConfig, b: InputBounds,
                 p: QuadParams, cfg: TimeOptConfig | None = None, gain=None,
                 pos_clip: float = np.inf, max_iter: int = MAX_ITER):
        self.w, self.hc, self.b, self.p = w, hc, b, p
        self.cfg = cfg or TimeOptConfig(enabled=False)
        self.gain = gain
        self.pos_clip = pos_clip
        self.max_iter = max_iter
        self._warm = None
        self.last: NmpcSolution | None = None

    def step(self, x, t_now, refs, u_ref, u_prev, f_ext=None) -> np.ndarray:
        u_warm = np.tile(u_prev, (self.hc.N_u, 1))
        sol = solve_nmpc(x, refs, u_warm, self.w, self.hc, self.b, t_now,
                         self.cfg, self.p, u_ref=u_ref, u_prev=u_prev,
                         f_ext=f_ext, gain=self.gain, pos_clip=self.pos_clip,
                         warm_moves=self._warm,
                         max_iter=self.max_iter)
        if sol.status is SolveStatus.SINGULAR:
            sol.u = np.clip(u_prev, *self.b.first_move_box(u_prev)[:2])
            self._warm = None
        else:
            self._warm = sol.moves
        self.last = sol
        return sol.u
