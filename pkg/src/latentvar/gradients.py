"""Analytic gradients for both formulations and a finite-difference checker.

Formulation A back-propagates through the numerical inverse g = f^-1 using
implicit differentiation: since f(g(z; theta); theta) = z for every theta,

    dg/dtheta = -(df/dtheta evaluated at g(z)) / f'(g(z)).

The functions here are the reference implementation; the compiled training
kernels in ``_kernels`` are checked against them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import SingularDerivative
from .model import (
    BISECT_TOL,
    ModelA,
    ModelB,
    SensorMapA,
    eval_f,
    eval_f_prime,
    invert_f,
    sigmoid,
)
from .optim import DualState

EPS_DERIV = 1e-12


@dataclass(frozen=True)
class GradThetaA:
    d_alpha: np.ndarray
    d_w: np.ndarray
    d_k: np.ndarray
    d_b: float

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.d_alpha, self.d_w, self.d_k, [self.d_b]])

    @classmethod
    def from_flat(cls, g) -> "GradThetaA":
        g = np.asarray(g, dtype=float)
        m = (g.shape[0] - 1) // 3
        return cls(g[:m], g[m:2 * m], g[2 * m:3 * m], float(g[3 * m]))


@dataclass(frozen=True)
class GradStep:
    """Cached forward pass at one time index.

    ``z_window[:, 0]`` is z[t] and ``z_window[:, p]`` is z[t-p] (after clamping);
    ``y_tilde[:, p-1]`` is g(z[t-p]).
    """

    z_window: np.ndarray
    y_tilde: np.ndarray
    y_hat: np.ndarray
    z_hat: np.ndarray
    f_prime: np.ndarray

    @property
    def residual_scale(self) -> np.ndarray:
        return 2.0 * (self.z_hat - self.z_window[:, 0])


def _window(z_window: Sequence[np.ndarray]) -> np.ndarray:
    return np.column_stack([np.asarray(z, dtype=float) for z in z_window])


def forward_step_a(model: ModelA, z_window: Sequence[np.ndarray],
                   tol: float = BISECT_TOL) -> GradStep:
    """Forward equations at one time index; z_window = [z[t], z[t-1], ..., z[t-P]]."""
    W = _window(z_window)
    P = model.var.lag_order
    if W.shape[1] != P + 1:
        raise ValueError(f"window must hold P+1 = {P + 1} vectors")
    W = np.stack([f.clamp(W[i]) for i, f in enumerate(model.maps)])
    Yt = np.stack([invert_f(f, W[i, 1:], tol) for i, f in enumerate(model.maps)])
    yhat = np.einsum("ijp,jp->i", model.var.coeffs, Yt)
    zhat = np.array([eval_f(f, yhat[i]) for i, f in enumerate(model.maps)])
    fp = np.array([eval_f_prime(f, yhat[i]) for i, f in enumerate(model.maps)])
    return GradStep(W, Yt, yhat, zhat, fp)


def cost_a(model: ModelA, z_window: Sequence[np.ndarray], tol: float = BISECT_TOL) -> float:
    """Per-sample squared prediction error C(A, theta, t)."""
    step = forward_step_a(model, z_window, tol)
    return float(np.sum((step.z_hat - step.z_window[:, 0]) ** 2))


def grad_a_wrt_var(step: GradStep, model: ModelA, i: int, j: int, p: int) -> float:
    """dC/da^{(p)}_{ij} for lag p in 1..P."""
    del model
    S = step.residual_scale
    return float(S[i] * step.f_prime[i] * step.y_tilde[j, p - 1])


def grad_a_wrt_var_all(step: GradStep) -> np.ndarray:
    S = step.residual_scale
    return (S * step.f_prime)[:, None, None] * step.y_tilde[None, :, :]


def df_dtheta(fmap: SensorMapA, y: float) -> GradThetaA:
    u = fmap.w * y - fmap.k
    s = sigmoid(u)
    sp = s * (1.0 - s)
    return GradThetaA(s, fmap.alpha * y * sp, -fmap.alpha * sp, 1.0)


def _dg_at(fmap: SensorMapA, y: float) -> np.ndarray:
    d = eval_f_prime(fmap, y)
    if not d > EPS_DERIV:
        raise SingularDerivative(f"f'(g(z)) = {d:.3e} is numerically zero")
    return -df_dtheta(fmap, y).flat / d


def grad_g_wrt_theta(fmap: SensorMapA, z: float, tol: float = BISECT_TOL) -> GradThetaA:
    """Implicit derivative of the inverse g(z; theta) with respect to theta."""
    y = invert_f(fmap, z, tol)
    return GradThetaA.from_flat(_dg_at(fmap, y))


def grad_cost_wrt_theta(step: GradStep, model: ModelA, i: int) -> GradThetaA:
    S = step.residual_scale
    fmap = model.maps[i]
    g = S[i] * df_dtheta(fmap, step.y_hat[i]).flat
    upstream = S * step.f_prime
    for p in range(model.var.lag_order):
        c = float(upstream @ model.var.coeffs[:, i, p])
        g = g + c * _dg_at(fmap, step.y_tilde[i, p])
    return GradThetaA.from_flat(g)


# ---------------------------------------------------------------- formulation B


def _dv_dtheta(theta: np.ndarray, m: int, z: float) -> np.ndarray:
    alpha, w, k = theta[:m], theta[m:2 * m], theta[2 * m:3 * m]
    s = sigmoid(w * z - k)
    sp = s * (1.0 - s)
    return np.concatenate([s, alpha * z * sp, -alpha * sp, [1.0, z]])


def _v(theta: np.ndarray, m: int, z: float) -> float:
    alpha, w, k = theta[:m], theta[m:2 * m], theta[2 * m:3 * m]
    return float(theta[3 * m] + theta[3 * m + 1] * z + alpha @ sigmoid(w * z - k))


@dataclass(frozen=True)
class GradLagrangianB:
    d_theta: np.ndarray   # N x (3M+2), per-sensor [alpha, w, k, b, gamma]
    d_coeffs: np.ndarray  # N x N x P


def lagrangian_b(model: ModelB, duals: DualState, z_window: Sequence[np.ndarray],
                 n_total: int, lam: float = 0.0) -> float:
    """Per-sample partial Lagrangian with 1/(T-P), 1/T and 1/(T-1) sample weights.

    The lasso share ``lam * |A|_1 / (T-P)`` is included only when ``lam > 0``.
    """
    W = _window(z_window)
    P = model.var.lag_order
    T = n_total
    theta = model.theta_matrix()
    m = model.maps[0].units
    V = np.array([[_v(theta[i], m, W[i, q]) for q in range(P + 1)] for i in range(W.shape[0])])
    r = V[:, 0] - np.einsum("ijp,jp->i", model.var.coeffs, V[:, 1:])
    val = r @ r / (T - P)
    val += duals.beta @ V[:, 0] / T
    val += duals.mu @ ((V[:, 0] ** 2 - (T - 1) / T) / (T - 1))
    if lam > 0:
        val += lam * np.abs(model.var.coeffs).sum() / (T - P)
    return float(val)


def grad_lagrangian_b(model: ModelB, duals: DualState, z_window: Sequence[np.ndarray],
                      n_total: int) -> GradLagrangianB:
    """Gradient of :func:`lagrangian_b` (smooth part) w.r.t. every theta_i and a^{(p)}_{nn'}."""
    W = _window(z_window)
    N = W.shape[0]
    P = model.var.lag_order
    T = n_total
    A = model.var.coeffs
    theta = model.theta_matrix()
    m = model.maps[0].units
    V = np.array([[_v(theta[i], m, W[i, q]) for q in range(P + 1)] for i in range(N)])
    D = np.array([[_dv_dtheta(theta[i], m, W[i, q]) for q in range(P + 1)] for i in range(N)])
    r = V[:, 0] - np.einsum("ijp,jp->i", A, V[:, 1:])
    wd = 2.0 / (T - P)
    d_coeffs = -wd * r[:, None, None] * V[None, :, 1:]
    c0 = wd * r + duals.beta / T + 2.0 * duals.mu * V[:, 0] / (T - 1)
    d_theta = c0[:, None] * D[:, 0, :]
    back = wd * np.einsum("n,nip->ip", r, A)
    d_theta -= np.einsum("ip,ipq->iq", back, D[:, 1:, :])
    return GradLagrangianB(d_theta, d_coeffs)


# ------------------------------------------------------------ finite differences


def central_difference(fun: Callable[[np.ndarray], float], x: np.ndarray,
                       step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for idx in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[idx] += step
        xm.flat[idx] -= step
        g.flat[idx] = (fun(xp) - fun(xm)) / (2 * step)
    return g


def gradient_mismatch(analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-8) -> float:
    """Largest componentwise |a - n| / max(|n|, atol) ratio (<= rtol means pass)."""
    analytic = np.asarray(analytic, dtype=float).ravel()
    numeric = np.asarray(numeric, dtype=float).ravel()
    scale = np.maximum(np.abs(numeric), atol)
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0


def check_gradient(fun: Callable[[np.ndarray], float], analytic: np.ndarray, x: np.ndarray,
                   step: float = 1e-6, rtol: float = 1e-4, atol: float = 1e-8) -> bool:
    """True when every component satisfies |a - n| <= rtol * |n| + atol."""
    numeric = central_difference(fun, x, step)
    err = np.abs(np.asarray(analytic).ravel() - numeric.ravel())
    return bool(np.all(err <= rtol * np.abs(numeric.ravel()) + atol))
