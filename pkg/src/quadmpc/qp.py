"""Box-constrained convex QP by projected gradient with Barzilai-Borwein steps.

    minimize  0.5 x'Hx + g'x   subject to  lb <= x <= ub
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

MAX_DIM = 128


class QPStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"


class BadProblem(ValueError):
    """Malformed QP, e.g. an empty box."""


@dataclass
class BoxQP:
    H: np.ndarray
    g: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        n = self.g.shape[0]
        self.lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        if self.H.shape != (n, n):
            raise BadProblem(f"H has shape {self.H.shape}, expected ({n}, {n})")
        if n > MAX_DIM:
            raise BadProblem(f"problem size {n} exceeds cap {MAX_DIM}")
        if np.any(self.lb > self.ub):
            bad = np.flatnonzero(self.lb > self.ub)
            raise BadProblem(f"lb > ub at indices {bad.tolist()}")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-10:
            raise BadProblem("H is not symmetric")

    @property
    def n(self) -> int:
        return self.g.shape[0]


def qp_objective(p: BoxQP, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        raise ValueError(f"x has shape {x.shape}, expected ({p.n},)")
    return float(0.5 * x @ p.H @ x + p.g @ x)


def solve_box_qp(p: BoxQP, tol: float = 1e-8, max_iter: int = 5000,
                 x0=None, history: list | None = None):
    """Return ``(x, status)``; ``x`` is always feasible and the best iterate seen.

    Uses the nonmonotone (last 10 values) safeguard so BB steps cannot
    wander. When ``history`` is a list, best-so-far objective values are
    appended to it once per iteration.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    lb, ub, H, g = p.lb, p.ub, p.H, p.g
    x = np.clip(np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=float), lb, ub)
    lip = float(np.max(np.sum(np.abs(H), axis=1), initial=0.0))
    fallback = 1.0 / lip if lip > 0 else 1.0

    grad = H @ x + g
    f = 0.5 * x @ H @ x + g @ x
    best_x, best_f = x.copy(), f
    recent = [f]
    step = fallback
    for _ in range(max_iter):
        pg = x - np.clip(x - grad, lb, ub)
        if np.linalg.norm(pg) < tol:
            return best_x, QPStatus.CONVERGED
        ref = max(recent)
        t = step
        for _ in range(60):
            x_new = np.clip(x - t * grad, lb, ub)
            d = x_new - x
            f_new = 0.5 * x_new @ H @ x_new + g @ x_new
            if f_new <= ref + 1e-4 * (grad @ d):
                break
            t *= 0.5
        grad_new = H @ x_new + g
        s = x_new - x
        y = grad_new - grad
        sy = s @ y
        step = (s @ s) / sy if sy > 0 else fallback
        if not np.isfinite(step) or step <= 0:
            step = fallback
        x, grad, f = x_new, grad_new, f_new
        recent.append(f)
        if len(recent) > 10:
            recent.pop(0)
        if f < best_f:
            best_x, best_f = x.copy(), f
        if history is not None:
            history.append(best_f)
        if not np.any(s):
            # projected step vanished: x is stationary up to rounding
            pg = x - np.clip(x - grad, lb, ub)
            if np.linalg.norm(pg) < tol:
                return best_x, QPStatus.CONVERGED
    return best_x, QPStatus.MAX_ITERATIONS
