"""Model parameters and forward evaluation.

Two per-sensor nonlinearities are supported:

* ``SensorMapA``: the measurement map ``f(y) = b + sum_j alpha_j h(w_j y - k_j)``
  whose image is the open sensor range ``(z_lo, z_hi)``; its inverse ``g`` is
  computed numerically by bisection.
* ``SensorMapB``: the sensor-to-latent map ``v(z) = b + gamma z + sum_j ...``,
  strictly increasing and onto the real line when ``gamma > 0``.

``h`` is the logistic sigmoid throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import _kernels as K
from .errors import HistoryTooShort, NonInvertible, OutOfImage

ArrayLike = Union[float, np.ndarray]

BISECT_TOL = 1e-10
BISECT_MAX_ITER = 200
GAMMA_MIN = 1e-3
CLAMP_FRAC = 1e-6


def sigmoid(x: ArrayLike) -> ArrayLike:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out[()] if out.ndim == 0 else out


def sigmoid_prime(x: ArrayLike) -> ArrayLike:
    s = sigmoid(x)
    return s * (1.0 - s)


def _vec(arr) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(arr, dtype=float).ravel())
    return a


@dataclass(frozen=True)
class VarCoefficients:
    """Latent VAR coefficients; ``coeffs[n, n2, p-1]`` is the lag-p weight of n2 on n."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 3 or c.shape[0] != c.shape[1] or c.shape[2] < 1:
            raise ValueError(f"coefficient tensor must be N x N x P, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def n_sensors(self) -> int:
        return self.coeffs.shape[0]

    @property
    def lag_order(self) -> int:
        return self.coeffs.shape[2]

    @classmethod
    def zeros(cls, n: int, p: int) -> "VarCoefficients":
        return cls(np.zeros((n, n, p)))

    def companion(self) -> np.ndarray:
        """NP x NP companion matrix of the latent process."""
        N, P = self.n_sensors, self.lag_order
        C = np.zeros((N * P, N * P))
        for p in range(P):
            C[:N, p * N:(p + 1) * N] = self.coeffs[:, :, p]
        if P > 1:
            C[N:, :-N] = np.eye(N * (P - 1))
        return C


@dataclass(frozen=True)
class SensorMapA:
    alpha: np.ndarray
    w: np.ndarray
    k: np.ndarray
    b: float
    z_lo: float
    z_hi: float

    def __post_init__(self):
        for name in ("alpha", "w", "k"):
            arr = _vec(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.alpha.shape == self.w.shape == self.k.shape):
            raise ValueError("alpha, w and k must have the same length")
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "z_lo", float(self.z_lo))
        object.__setattr__(self, "z_hi", float(self.z_hi))
        if not self.z_lo < self.z_hi:
            raise ValueError("sensor range needs z_lo < z_hi")

    @property
    def units(self) -> int:
        return self.alpha.shape[0]

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.w, self.k, [self.b]])

    @classmethod
    def from_theta(cls, theta, z_lo, z_hi) -> "SensorMapA":
        theta = np.asarray(theta, dtype=float)
        m = (theta.shape[0] - 1) // 3
        return cls(theta[:m], theta[m:2 * m], theta[2 * m:3 * m], theta[3 * m], z_lo, z_hi)

    def is_feasible(self, atol: float = 1e-12) -> bool:
        return bool(
            np.all(self.alpha >= 0)
            and np.all(self.w >= 0)
            and abs(self.alpha.sum() - (self.z_hi - self.z_lo)) <= atol * max(1.0, self.z_hi - self.z_lo)
            and self.b == self.z_lo
        )

    def clamp(self, z: ArrayLike) -> ArrayLike:
        """Pull measurements strictly inside the open image of f."""
        eps = CLAMP_FRAC * (self.z_hi - self.z_lo)
        return np.clip(z, self.z_lo + eps, self.z_hi - eps)


@dataclass(frozen=True)
class SensorMapB:
    alpha: np.ndarray
    w: np.ndarray
    k: np.ndarray
    b: float
    gamma: float

    def __post_init__(self):
        for name in ("alpha", "w", "k"):
            arr = _vec(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.alpha.shape == self.w.shape == self.k.shape):
            raise ValueError("alpha, w and k must have the same length")
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def units(self) -> int:
        return self.alpha.shape[0]

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.w, self.k, [self.b, self.gamma]])

    @classmethod
    def from_theta(cls, theta) -> "SensorMapB":
        theta = np.asarray(theta, dtype=float)
        m = (theta.shape[0] - 2) // 3
        return cls(theta[:m], theta[m:2 * m], theta[2 * m:3 * m], theta[3 * m], theta[3 * m + 1])

    def is_feasible(self, gamma_min: float = GAMMA_MIN) -> bool:
        return bool(np.all(self.alpha >= 0) and np.all(self.w >= 0) and self.gamma >= gamma_min)


@dataclass(frozen=True)
class ModelA:
    var: VarCoefficients
    maps: tuple

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        if len(self.maps) != self.var.n_sensors:
            raise ValueError("need one sensor map per sensor")

    def theta_matrix(self) -> np.ndarray:
        return np.stack([m.theta for m in self.maps])


@dataclass(frozen=True)
class ModelB:
    var: VarCoefficients
    maps: tuple

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        if len(self.maps) != self.var.n_sensors:
            raise ValueError("need one sensor map per sensor")

    def theta_matrix(self) -> np.ndarray:
        return np.stack([m.theta for m in self.maps])


def _apply(fn, theta, m, x, *extra):
    arr = np.asarray(x, dtype=float)
    out = fn(theta, m, _vec(arr), *extra)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def eval_f(fmap: SensorMapA, y: ArrayLike) -> ArrayLike:
    return _apply(K.map_val_many, fmap.theta, fmap.units, y)


def eval_f_prime(fmap: SensorMapA, y: ArrayLike) -> ArrayLike:
    return _apply(K.map_der_many, fmap.theta, fmap.units, y)


def invert_f(fmap: SensorMapA, z: ArrayLike, tol: float = BISECT_TOL,
             max_iter: int = BISECT_MAX_ITER) -> ArrayLike:
    """Numerical inverse g = f^-1 by bracketed bisection.

    ``z`` must lie strictly inside ``(z_lo, z_hi)``; clamp with
    :meth:`SensorMapA.clamp` first when the data may touch the bounds.
    A ``tol`` of 0 bisects until the bracket collapses to adjacent floats.
    """
    za = np.asarray(z, dtype=float)
    if np.any(za <= fmap.z_lo) or np.any(za >= fmap.z_hi):
        raise OutOfImage(f"measurement outside the open range ({fmap.z_lo}, {fmap.z_hi})")
    y = _apply(K.map_inverse_many, fmap.theta, fmap.units, za, float(tol), int(max_iter))
    if np.any(np.isnan(y)):
        raise NonInvertible("map is flat over the expanded bracket")
    return y


def eval_v(vmap: SensorMapB, z: ArrayLike) -> ArrayLike:
    return _apply(K.map_val_many, vmap.theta, vmap.units, z)


def eval_v_prime(vmap: SensorMapB, z: ArrayLike) -> ArrayLike:
    return _apply(K.map_der_many, vmap.theta, vmap.units, z)


def invert_v(vmap: SensorMapB, y: ArrayLike, tol: float = BISECT_TOL,
             max_iter: int = BISECT_MAX_ITER) -> ArrayLike:
    """Evaluate r = v^-1, the latent-to-measurement map of formulation B."""
    z = _apply(K.map_inverse_many, vmap.theta, vmap.units, y, float(tol), int(max_iter))
    if np.any(np.isnan(z)):
        raise NonInvertible("inverse map has no bracket (gamma too small?)")
    return z


def predict_latent(var: VarCoefficients, y_hist: Sequence[np.ndarray]) -> np.ndarray:
    """One-step latent prediction; ``y_hist[p-1]`` holds y[t-p]."""
    P = var.lag_order
    if len(y_hist) < P:
        raise HistoryTooShort(f"need {P} past vectors, got {len(y_hist)}")
    H = np.column_stack([np.asarray(y_hist[p], dtype=float) for p in range(P)])
    return np.einsum("ijp,jp->i", var.coeffs, H)


def predict_measurement_a(model: ModelA, z_hist: Sequence[np.ndarray],
                          tol: float = BISECT_TOL) -> np.ndarray:
    P = model.var.lag_order
    if len(z_hist) < P:
        raise HistoryTooShort(f"need {P} past vectors, got {len(z_hist)}")
    y_hist = []
    for p in range(P):
        zp = np.asarray(z_hist[p], dtype=float)
        y_hist.append(np.array([invert_f(f, f.clamp(zp[i]), tol) for i, f in enumerate(model.maps)]))
    yhat = predict_latent(model.var, y_hist)
    return np.array([eval_f(f, yhat[i]) for i, f in enumerate(model.maps)])


def predict_measurement_b(model: ModelB, z_hist: Sequence[np.ndarray],
                          tol: float = BISECT_TOL) -> np.ndarray:
    P = model.var.lag_order
    if len(z_hist) < P:
        raise HistoryTooShort(f"need {P} past vectors, got {len(z_hist)}")
    y_hist = [np.array([eval_v(v, np.asarray(z_hist[p], dtype=float)[i])
                        for i, v in enumerate(model.maps)]) for p in range(P)]
    yhat = predict_latent(model.var, y_hist)
    return np.array([invert_v(v, yhat[i], tol) for i, v in enumerate(model.maps)])


def lipschitz_of_r(vmap: SensorMapB, z_grid: np.ndarray) -> float:
    """Lipschitz constant of r = v^-1 over the grid: 1 / min v'."""
    z_grid = np.asarray(z_grid, dtype=float)
    if z_grid.size == 0:
        raise ValueError("empty evaluation grid")
    return float(1.0 / np.min(eval_v_prime(vmap, z_grid)))


# ------------------------------------------------------------ series helpers


def lagged_latent_prediction(coeffs: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Predictions y_hat[:, t] for t = P..T-1 from the latent series Y (N x T)."""
    N, T = Y.shape
    P = coeffs.shape[2]
    out = np.zeros((N, T - P))
    for p in range(P):
        out += coeffs[:, :, p] @ Y[:, P - p - 1:T - p - 1]
    return out


def clamp_series_a(maps: Sequence[SensorMapA], Z: np.ndarray) -> np.ndarray:
    return np.stack([f.clamp(Z[i]) for i, f in enumerate(maps)])


def predict_series_a(model: ModelA, Z: np.ndarray, tol: float = BISECT_TOL) -> np.ndarray:
    """Measurement-space predictions for t = P..T-1 (N x (T-P))."""
    theta = model.theta_matrix()
    m = model.maps[0].units
    Y = K.invert_maps(theta, m, np.ascontiguousarray(clamp_series_a(model.maps, Z)),
                      float(tol), BISECT_MAX_ITER)
    if np.any(np.isnan(Y)):
        raise NonInvertible("map is flat over the expanded bracket")
    Yhat = lagged_latent_prediction(model.var.coeffs, Y)
    return K.apply_maps(theta, m, np.ascontiguousarray(Yhat))


def latent_series_b(model: ModelB, Z: np.ndarray) -> np.ndarray:
    return K.apply_maps(model.theta_matrix(), model.maps[0].units,
                        np.ascontiguousarray(Z, dtype=float))


def predict_series_b(model: ModelB, Z: np.ndarray, tol: float = BISECT_TOL):
    """Return (latent targets, latent predictions, measurement predictions), each for t >= P."""
    theta = model.theta_matrix()
    m = model.maps[0].units
    V = K.apply_maps(theta, m, np.ascontiguousarray(Z, dtype=float))
    Yhat = lagged_latent_prediction(model.var.coeffs, V)
    Zhat = K.invert_maps(theta, m, np.ascontiguousarray(Yhat), float(tol), BISECT_MAX_ITER)
    if np.any(np.isnan(Zhat)):
        raise NonInvertible("inverse map has no bracket")
    return V[:, model.var.lag_order:], Yhat, Zhat
