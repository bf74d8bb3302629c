"""Proximal, projection and dual-ascent primitives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .model import GAMMA_MIN, SensorMapA, SensorMapB


@dataclass(frozen=True)
class StepSizes:
    eta: float = 3e-4
    eta_p: float = 3e-5
    eta_d: float = 1e-3

    def __post_init__(self):
        if min(self.eta, self.eta_p, self.eta_d) <= 0:
            raise ValueError("step sizes must be positive")


@dataclass(frozen=True)
class DualState:
    beta: np.ndarray
    mu: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "DualState":
        return cls(np.zeros(n), np.zeros(n))


def soft_threshold(x, eta: float, lam: float):
    """prox of eta*lam*|.|: x * [1 - eta*lam/|x|]_+ (0 at x = 0)."""
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - eta * lam, 0.0)
    return float(out) if out.ndim == 0 else out


def project_simplex(v, s: float = 1.0) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) = s}, O(n log n) via sorting."""
    return K.project_simplex(np.ascontiguousarray(v, dtype=float), float(s))


def project_theta_a(alpha, w, k, b, z_lo: float, z_hi: float) -> SensorMapA:
    """Project raw measurement-map parameters onto the dynamic-range feasible set.

    The constraint set splits into independent blocks: alpha on the simplex
    scaled to the range width, w on the nonnegative orthant, b fixed to z_lo,
    k free.
    """
    del b  # pinned to z_lo by the constraint
    alpha = project_simplex(alpha, z_hi - z_lo)
    w = np.maximum(np.asarray(w, dtype=float), 0.0)
    return SensorMapA(alpha, w, np.asarray(k, dtype=float), z_lo, z_lo, z_hi)


def project_theta_b(alpha, w, k, b, gamma, gamma_min: float = GAMMA_MIN) -> SensorMapB:
    return SensorMapB(
        np.maximum(np.asarray(alpha, dtype=float), 0.0),
        np.maximum(np.asarray(w, dtype=float), 0.0),
        np.asarray(k, dtype=float),
        b,
        max(float(gamma), gamma_min),
    )


def dual_ascent_step(duals: DualState, g1_sample, g2_sample, eta_d: float) -> DualState:
    g1 = np.asarray(g1_sample, dtype=float)
    g2 = np.asarray(g2_sample, dtype=float)
    if g1.shape != duals.beta.shape or g2.shape != duals.mu.shape:
        raise ValueError("constraint samples must match the dual shapes")
    return DualState(duals.beta + eta_d * g1, duals.mu + eta_d * g2)
