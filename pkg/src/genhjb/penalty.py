"""Separable quadratic control penalty with box constraints.

r(u) = sum_j w_j u_j^2 on the box U = prod_j [lo_j, hi_j], with 0 in U.

The pointwise minimization that the HJB recursion needs,

    dual_value(lam) = min_{u in U} ( r(u) + <lam, u> ),

has the closed-form minimizer u*_j = clip(-lam_j / (2 w_j), lo_j, hi_j).
Since u = 0 is feasible and r(0) = 0, dual_value(lam) <= 0 for every lam.
The convex conjugate on the box is r*(lam) = -dual_value(-lam).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ControlPenalty:
    weights: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        lo = np.atleast_1d(np.asarray(self.u_min, dtype=float))
        hi = np.atleast_1d(np.asarray(self.u_max, dtype=float))
        if w.ndim != 1 or w.shape != lo.shape or w.shape != hi.shape:
            raise ValueError(
                f"weights, u_min, u_max must be vectors of equal length, got "
                f"{w.shape}, {lo.shape}, {hi.shape}"
            )
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("penalty weights must be positive and finite")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("control box bounds must be finite")
        if np.any(lo > 0) or np.any(hi < 0):
            raise ValueError("control box must contain u = 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)

    @property
    def n_u(self) -> int:
        return self.weights.size


def symmetric_box_penalty(weights, u_max) -> ControlPenalty:
    """Penalty on the symmetric box [-u_max, u_max] per channel."""
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    hi = np.broadcast_to(np.asarray(u_max, dtype=float), w.shape).copy()
    return ControlPenalty(weights=w, u_min=-hi, u_max=hi)


def _lam(p: ControlPenalty, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1:] != (p.n_u,):
        raise ValueError(f"expected trailing dimension {p.n_u}, got shape {lam.shape}")
    return lam


def u_star(p: ControlPenalty, lam) -> np.ndarray:
    """Minimizer of r(u) + <lam, u> over the box.

    ``lam`` may carry leading batch axes; the box is applied per channel.
    """
    lam = _lam(p, lam)
    return np.clip(-lam / (2.0 * p.weights), p.u_min, p.u_max)


def dual_value(p: ControlPenalty, lam):
    """min_u ( r(u) + <lam, u> ), always <= 0.  Batched over leading axes."""
    lam = _lam(p, lam)
    u = u_star(p, lam)
    out = np.sum(p.weights * u**2 + lam * u, axis=-1)
    return float(out) if out.ndim == 0 else out


def conjugate(p: ControlPenalty, lam):
    """Convex conjugate r*(lam) = max_u ( <lam, u> - r(u) ) over the box."""
    lam = _lam(p, lam)
    neg = dual_value(p, -lam)
    return -neg


def penalty_value(p: ControlPenalty, u):
    """r(u) = sum_j w_j u_j^2, batched over leading axes of u."""
    u = _lam(p, u)
    out = np.sum(p.weights * u**2, axis=-1)
    return float(out) if out.ndim == 0 else out
