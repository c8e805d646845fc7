"""Cost terms shared by every controller.

The objective is split into a stage state term ``jx``, an input term ``ju``,
a terminal term ``jp`` and the time-optimal term ``ji``. The last one scales
the horizon error energy by ``|exp(-alpha (t - t_o)) - 1|``, which is zero
when the clock reaches the target flight time ``t_o``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from quadmpc.dynamics import NU, NX


def _diag(values, n):
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = np.diag(v)
    if v.shape != (n,):
        raise ValueError(f"weight diagonal must have {n} entries, got {v.shape}")
    return v


def default_q() -> np.ndarray:
    # leading ones, trailing zeros: the last two angular rates are unweighted
    return np.r_[np.ones(10), np.zeros(2)]


@dataclass(frozen=True)
class WeightSet:
    """Diagonal weights. Matrices are stored as their diagonals."""

    q: np.ndarray = field(default_factory=default_q)
    r: np.ndarray = field(default_factory=lambda: np.full(NU, 0.1))
    p: np.ndarray = field(default_factory=default_q)
    qi: np.ndarray = field(default_factory=lambda: np.ones(NX))
    alpha: float = 0.5

    def __post_init__(self):
        for name, n in (("q", NX), ("r", NU), ("p", NX), ("qi", NX)):
            object.__setattr__(self, name, _diag(getattr(self, name), n))
        if min(self.q.min(), self.p.min(), self.qi.min()) < 0:
            raise ValueError("Q, P and Qi must be non-negative")
        if not self.r.min() > 0:
            raise ValueError("R must be positive definite")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @property
    def Q(self):
        return np.diag(self.q)

    @property
    def R(self):
        return np.diag(self.r)

    @property
    def P(self):
        return np.diag(self.p)

    @property
    def Qi(self):
        return np.diag(self.qi)

    def scaled_stage(self, dt: float) -> "WeightSet":
        """Stage weights (Q, R, Qi) pre-multiplied by ``dt``; P untouched."""
        return WeightSet(self.q * dt, self.r * dt, self.p, self.qi * dt, self.alpha)

    @classmethod
    def from_dict(cls, d: dict) -> "WeightSet":
        return cls(**{k: (v if k == "alpha" else np.asarray(v, dtype=float))
                      for k, v in d.items()})

    def to_dict(self) -> dict:
        return {"q": self.q.tolist(), "r": self.r.tolist(), "p": self.p.tolist(),
                "qi": self.qi.tolist(), "alpha": self.alpha}


@dataclass(frozen=True)
class TimeOptConfig:
    t_o: float = 2.4
    enabled: bool = False

    def __post_init__(self):
        if self.enabled and not self.t_o > 0:
            raise ValueError("t_o must be positive when the time-optimal term is enabled")


@dataclass(frozen=True)
class CostBreakdown:
    jx: float = 0.0
    ju: float = 0.0
    jp: float = 0.0
    ji: float = 0.0

    @property
    def total(self) -> float:
        return self.jx + self.ju + self.jp + self.ji

    def as_array(self) -> np.ndarray:
        return np.array([self.jx, self.ju, self.jp, self.ji])

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(self.jx + other.jx, self.ju + other.ju,
                             self.jp + other.jp, self.ji + other.ji)


def weighted_sqnorm(v, w) -> float:
    """sum_i w_i v_i^2 for a diagonal weight given as matrix or diagonal."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.ndim == 2:
        w = np.diag(w)
    if v.shape != w.shape:
        raise ValueError(f"dimension mismatch: {v.shape} vs weight {w.shape}")
    return float(np.dot(w, v * v))


def tracking_error(x, x_ref) -> np.ndarray:
    """Componentwise ``x - x_ref``; angles are not wrapped."""
    return np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)


def time_factor(t: float, t_o: float, alpha: float) -> float:
    return abs(math.exp(-alpha * (t - t_o)) - 1.0)


def time_optimal_term(errors, w: WeightSet, t: float, cfg: TimeOptConfig) -> float:
    if not cfg.enabled:
        return 0.0
    energy = sum(weighted_sqnorm(e, w.qi) for e in np.atleast_2d(errors))
    return energy * time_factor(t, cfg.t_o, w.alpha)


def total_cost(pred_states, inputs, refs, w: WeightSet, t: float,
               cfg: TimeOptConfig, u_ref=None) -> CostBreakdown:
    """Evaluate all four terms on a predicted trajectory.

    ``pred_states`` and ``refs`` hold N+1 states (stage 0..N); ``inputs`` holds
    the N_u free moves. The input term penalizes ``inputs - u_ref`` (zero by
    default).
    """
    xs = np.atleast_2d(np.asarray(pred_states, dtype=float))
    rs = np.atleast_2d(np.asarray(refs, dtype=float))
    us = np.atleast_2d(np.asarray(inputs, dtype=float))
    if xs.shape != rs.shape or xs.shape[0] < 2:
        raise ValueError(f"need matching N+1 states and refs, got {xs.shape} and {rs.shape}")
    if u_ref is not None:
        us = us - np.atleast_2d(np.asarray(u_ref, dtype=float))[: us.shape[0]]
    errs = tracking_error(xs, rs)
    jx = sum(weighted_sqnorm(e, w.q) for e in errs[:-1])
    ju = sum(weighted_sqnorm(u, w.r) for u in us)
    jp = weighted_sqnorm(errs[-1], w.p)
    ji = time_optimal_term(errs[:-1], w, t, cfg)
    return CostBreakdown(jx, ju, jp, ji)
