"""Model fitting: lasso VAR baseline, identity-like initialisation, and the
two nonlinear trainers (explicit inversion / latent-error primal-dual)."""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels as K
from .data import Dataset
from .errors import DegenerateData, Diverged, FitFailed, SingularDerivative, NonInvertible
from .evaluation import nmse
from .model import (
    BISECT_MAX_ITER,
    BISECT_TOL,
    GAMMA_MIN,
    ModelA,
    ModelB,
    SensorMapA,
    SensorMapB,
    VarCoefficients,
    clamp_series_a,
    lagged_latent_prediction,
    predict_series_a,
    predict_series_b,
    latent_series_b,
    sigmoid,
)
from .optim import DualState, StepSizes, project_simplex

log = logging.getLogger(__name__)

METHODS = ("linear", "f_a", "f_b")
METHOD_ALIASES = {"formulation_a": "f_a", "formulation_b": "f_b", "linear_var": "linear"}
LAMBDA_GRID = tuple(np.logspace(-4, 0, 13))
RANGE_MARGIN = 0.05


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.0
    steps: StepSizes = field(default_factory=StepSizes)
    epochs: int = 20
    units: int = 10
    lag: int = 4
    seed: int = 0
    gamma_min: float = GAMMA_MIN
    bisect_tol: float = BISECT_TOL
    sample_order: str = "sequential"
    outer_slope: float = 2.0
    linear_tol: float = 1e-12
    linear_max_iter: int = 50000
    diverge_factor: float = 1e3
    freeze_duals: bool = False
    var_init: str = "linear"   # "linear" or "zero"
    map_init: str = "identity"  # formulation B only: "identity" or "exact"
    dual_init: str = "lstsq"    # formulation B only: "lstsq" or "zero"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.epochs < 0 or self.units < 1 or self.lag < 1:
            raise ValueError("epochs >= 0, units >= 1 and lag >= 1 required")
        if self.sample_order not in ("sequential", "shuffled"):
            raise ValueError(f"unknown sample order {self.sample_order!r}")
        if (self.var_init not in ("linear", "zero") or self.map_init not in ("identity", "exact")
                or self.dual_init not in ("lstsq", "zero")):
            raise ValueError("bad initialisation option")


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, z: np.ndarray) -> "Standardizer":
        sd = z.std(axis=1)
        if np.any(sd == 0):
            raise DegenerateData("a sensor is constant on the training split")
        return cls(z.mean(axis=1), sd)

    def apply(self, z: np.ndarray) -> np.ndarray:
        return (z - self.mean[:, None]) / self.scale[:, None]

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.scale[:, None] + self.mean[:, None]


@dataclass
class FitResult:
    method: str
    model: Union[ModelA, ModelB, VarCoefficients]
    standardizer: Standardizer
    config: TrainConfig
    trace: dict = field(default_factory=dict)
    duals: Optional[DualState] = None
    meta: dict = field(default_factory=dict)

    @property
    def var(self) -> VarCoefficients:
        return self.model if isinstance(self.model, VarCoefficients) else self.model.var


# --------------------------------------------------------------- linear VAR


def _lagged_design(Z: np.ndarray, P: int):
    N, T = Z.shape
    X = np.hstack([Z[:, P - p - 1:T - p - 1].T for p in range(P)])  # (T-P) x NP
    Y = Z[:, P:].T
    return X, Y


def _stack_to_tensor(B: np.ndarray, N: int, P: int) -> np.ndarray:
    return np.stack([B[:, p * N:(p + 1) * N] for p in range(P)], axis=2)


def fit_linear_var(data: Union[Dataset, np.ndarray], lam: float, cfg: TrainConfig,
                   return_trace: bool = False):
    """Lasso VAR by ISTA on  mean_t ||y[t] - sum_p A_p y[t-p]||^2 + lam * |A|_1.

    Starts from zero; step 1/L with L the Lipschitz constant of the smooth
    part, so the objective is nonincreasing.
    """
    Z = data.z if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    N, T = Z.shape
    P = cfg.lag
    if T <= P:
        raise ValueError(f"series of length {T} too short for lag {P}")
    if np.any(Z.std(axis=1) == 0):
        raise DegenerateData("a sensor is constant")
    X, Y = _lagged_design(Z, P)
    n = X.shape[0]
    G = X.T @ X / n
    C = Y.T @ X / n
    yy = float(np.sum(Y * Y) / n)
    L = 2.0 * float(np.linalg.eigvalsh(G)[-1])
    B = np.zeros((N, N * P))

    def objective(B):
        return yy - 2.0 * np.sum(B * C) + np.sum((B @ G) * B) + lam * np.abs(B).sum()

    obj = objective(B)
    trace = [obj]
    for _ in range(cfg.linear_max_iter):
        grad = 2.0 * (B @ G - C)
        Bn = B - grad / L
        Bn = np.sign(Bn) * np.maximum(np.abs(Bn) - lam / L, 0.0)
        new = objective(Bn)
        B = Bn
        trace.append(new)
        if abs(obj - new) <= cfg.linear_tol * max(abs(obj), 1e-300):
            break
        obj = new
    var = VarCoefficients(_stack_to_tensor(B, N, P))
    return (var, np.asarray(trace)) if return_trace else var


# ------------------------------------------------------ identity-like maps


def _rmse(e):
    return float(np.sqrt(np.mean(e ** 2)))


def _canonical_gd(theta, x, target, has_gamma, lr, max_iter, rmse_tol, gamma_min):
    """Plain projected gradient descent of a one-layer map onto a target curve."""
    m = (theta.shape[0] - (2 if has_gamma else 1)) // 3
    n = x.shape[0]
    theta = theta.copy()

    def evaluate(theta):
        a, w, k = theta[:m], theta[m:2 * m], theta[2 * m:3 * m]
        H = sigmoid(np.outer(x, w) - k)
        f = theta[3 * m] + H @ a
        if has_gamma:
            f = f + theta[3 * m + 1] * x
        return H, f

    for _ in range(max_iter):
        H, f = evaluate(theta)
        e = f - target
        if _rmse(e) < rmse_tol:
            break
        a = theta[:m]
        Hp = H * (1.0 - H)
        g = np.empty_like(theta)
        g[:m] = 2 * (e @ H) / n
        g[m:2 * m] = 2 * a * ((e * x) @ Hp) / n
        g[2 * m:3 * m] = -2 * a * (e @ Hp) / n
        g[3 * m] = 2 * e.mean()
        if has_gamma:
            g[3 * m + 1] = 2 * (e @ x) / n
        theta = theta - lr * g
        if has_gamma:
            K.project_b_inplace(theta, m, gamma_min)
        else:
            K.project_a_inplace(theta, m, -1.0, 1.0)
    _, f = evaluate(theta)
    return theta, _rmse(f - target)


@functools.lru_cache(maxsize=None)
def canonical_f(units: int, max_iter: int = 20000, rmse_tol: float = 0.01,
                width: float = 3.0) -> tuple:
    """Fit f_check on [-1, 1] to clip(x, -1, 1); returns the flat parameter tuple.

    Units start as an evenly spaced staircase of sigmoids (each ramp spanning
    about its spacing), then projected gradient descent runs until the grid
    RMSE drops below ``rmse_tol``.
    """
    x = np.linspace(-1.5, 1.5, 2001)
    target = np.clip(x, -1.0, 1.0)
    sp = 2.0 / units
    centers = -1.0 + sp * (np.arange(units) + 0.5)
    w = np.full(units, width / sp)
    theta = np.concatenate([np.full(units, 2.0 / units), w, w * centers, [-1.0]])
    theta, err = _canonical_gd(theta, x, target, False, 1.0, max_iter, rmse_tol, GAMMA_MIN)
    if not err < rmse_tol:
        raise FitFailed(f"canonical measurement map reached RMSE {err:.4f}")
    mid = np.abs(x) <= 0.8
    fmap = SensorMapA.from_theta(theta, -1.0, 1.0)
    check = K.map_val_many(fmap.theta, units, x)
    if np.max(np.abs(check[mid] - x[mid])) > 0.04:
        raise FitFailed("canonical measurement map is not identity-like in the core range")
    return tuple(theta)


@functools.lru_cache(maxsize=None)
def canonical_v(units: int, outer_slope: float, max_iter: int = 20000,
                rmse_tol: float = 0.01, width: float = 4.5,
                gamma_min: float = GAMMA_MIN) -> tuple:
    """Fit v_check: identity on [-1, 1], slope ``outer_slope`` beyond.

    Half of the units sit on each side just outside the identity region and
    supply the extra slope; gamma carries the unit slope.
    """
    if not outer_slope > 1:
        raise ValueError("outer_slope must exceed 1")
    x = np.linspace(-2.5, 2.5, 2001)
    target = np.where(np.abs(x) <= 1, x, np.sign(x) * (1 + outer_slope * (np.abs(x) - 1)))
    left = units // 2
    right = units - left
    centers = np.concatenate([
        -(1 + 1.5 / left * (np.arange(left) + 0.5))[::-1] if left else np.zeros(0),
        1 + 1.5 / right * (np.arange(right) + 0.5),
    ])
    sp = 1.5 / max(right, 1)
    alpha = np.full(units, (outer_slope - 1) * sp)
    w = np.full(units, width / sp)
    b = -alpha[:left].sum()
    theta = np.concatenate([alpha, w, w * centers, [b, 1.0]])
    theta, err = _canonical_gd(theta, x, target, True, 0.05, max_iter, rmse_tol, gamma_min)
    if not err < rmse_tol:
        raise FitFailed(f"canonical inverse map reached RMSE {err:.4f}")
    return tuple(theta)


def data_range(z: np.ndarray, margin: float = RANGE_MARGIN):
    """Per-sensor (lo, hi): observed min/max widened by ``margin`` of the span on each side."""
    lo = z.min(axis=1)
    hi = z.max(axis=1)
    span = hi - lo
    return lo - margin * span, hi + margin * span


def _range_transform(z_lo: float, z_hi: float):
    c = (z_hi - z_lo) / 2.0
    d = (z_hi + z_lo) / 2.0
    a = 2.0 / (z_hi - z_lo)
    B = -(z_hi + z_lo) / (z_hi - z_lo)
    return c, d, a, B


def init_identity_a(z_lo: float, z_hi: float, units: int = 10) -> SensorMapA:
    """Measurement map with f(x) ~ clip(x, z_lo, z_hi), from the canonical fit."""
    if not z_lo < z_hi:
        raise ValueError("z_lo < z_hi required")
    th = np.asarray(canonical_f(units))
    m = units
    c, d, a, B = _range_transform(z_lo, z_hi)
    alpha = c * th[:m]
    w = a * th[m:2 * m]
    k = th[2 * m:3 * m] - th[m:2 * m] * B
    # rescaling the simplex keeps sum(alpha) = z_hi - z_lo up to rounding; re-project
    alpha = project_simplex(alpha, z_hi - z_lo)
    return SensorMapA(alpha, w, k, z_lo, z_lo, z_hi)


def init_identity_b(z_lo: float = -1.0, z_hi: float = 1.0, units: int = 10,
                    outer_slope: float = 2.0, gamma_min: float = GAMMA_MIN) -> SensorMapB:
    """Inverse map behaving like the identity on [z_lo, z_hi] and steep outside."""
    th = np.asarray(canonical_v(units, float(outer_slope), gamma_min=gamma_min))
    m = units
    c, d, a, B = _range_transform(z_lo, z_hi)
    # v(z) = c * v_check(a z + B) + d; the linear term contributes c * gamma * B to b
    gamma = th[3 * m + 1]
    return SensorMapB(
        c * th[:m],
        a * th[m:2 * m],
        th[2 * m:3 * m] - th[m:2 * m] * B,
        c * th[3 * m] + d + c * gamma * B,
        max(c * a * gamma, gamma_min),
    )


# ------------------------------------------------------------------ trainers


def _sample_order(T: int, P: int, cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    order = np.arange(P, T, dtype=np.int64)
    if cfg.sample_order == "shuffled":
        rng.shuffle(order)
    return order


def objective_a(model: ModelA, Z: np.ndarray, lam: float, tol: float = BISECT_TOL,
                guess: Optional[np.ndarray] = None) -> float:
    """Mean per-sample measurement error plus lasso term (Z already standardised).

    ``guess`` (N x T, optional) seeds the inversions and is refreshed in place.
    """
    Zc = np.ascontiguousarray(clamp_series_a(model.maps, Z))
    P = model.var.lag_order
    theta = model.theta_matrix()
    m = model.maps[0].units
    if guess is None:
        guess = np.full(Zc.shape, np.nan)
    Y = K.invert_maps_near(theta, m, Zc, float(tol), BISECT_MAX_ITER, guess)
    if np.any(np.isnan(Y)):
        raise NonInvertible("map is flat over the expanded bracket")
    guess[:] = Y
    Zhat = K.apply_maps(theta, m, np.ascontiguousarray(lagged_latent_prediction(model.var.coeffs, Y)))
    err = np.sum((Zhat - Zc[:, P:]) ** 2, axis=0).mean()
    return float(err + lam * np.abs(model.var.coeffs).sum())


def _check_progress(obj, obj0, cfg, epoch):
    if not np.isfinite(obj) or obj > cfg.diverge_factor * max(obj0, 1e-12):
        raise Diverged(f"objective {obj:.4g} at epoch {epoch} (initial {obj0:.4g})")


def _model_a(theta, A, z_lo, z_hi):
    maps = [SensorMapA.from_theta(theta[i], z_lo[i], z_hi[i]) for i in range(theta.shape[0])]
    return ModelA(VarCoefficients(A.copy()), maps)


def train_formulation_a(data: Dataset, cfg: TrainConfig, callback=None) -> FitResult:
    """Explicit-inversion trainer: per-sample gradient step on theta, projection,
    and proximal step on the VAR coefficients.

    ``callback(epoch, model)`` (if given) sees the live parameters after each epoch.
    """
    std = Standardizer.fit(data.z)
    Z = std.apply(data.z)
    N, T = Z.shape
    P = cfg.lag
    z_lo, z_hi = data_range(Z)
    maps = [init_identity_a(z_lo[i], z_hi[i], cfg.units) for i in range(N)]
    Z = np.ascontiguousarray(clamp_series_a(maps, Z))
    if cfg.var_init == "linear":
        A = fit_linear_var(Z, cfg.lam, cfg).coeffs.copy()
    else:
        A = np.zeros((N, N, P))
    theta = np.ascontiguousarray(np.stack([f.theta for f in maps]))
    model = _model_a(theta, A, z_lo, z_hi)
    ycache = np.full((N, T), np.nan)
    obj0 = objective_a(model, Z, cfg.lam, cfg.bisect_tol, ycache)
    rng = np.random.default_rng(cfg.seed)
    eta = cfg.steps.eta
    objs = []
    for epoch in range(cfg.epochs):
        order = _sample_order(T, P, cfg, rng)
        status = K.epoch_a(Z, order, theta, cfg.units, A, z_lo, z_hi, eta, eta * cfg.lam,
                           cfg.bisect_tol, BISECT_MAX_ITER, 1e-12, ycache)
        if status == K.STATUS_SINGULAR:
            raise SingularDerivative(f"flat measurement map during epoch {epoch}")
        if status != K.STATUS_OK:
            raise Diverged(f"inversion failed during epoch {epoch}")
        model = _model_a(theta, A, z_lo, z_hi)
        obj = objective_a(model, Z, cfg.lam, cfg.bisect_tol, ycache)
        _check_progress(obj, obj0, cfg, epoch)
        objs.append(obj)
        if callback is not None:
            callback(epoch, model)
    return FitResult("f_a", model, std, cfg, {"objective": np.asarray(objs), "initial": obj0})


def constraint_residuals_b(model: ModelB, Z: np.ndarray):
    """(g1, g2): latent sample mean and (unbiased) second moment minus one, per sensor."""
    V = latent_series_b(model, Z)
    T = V.shape[1]
    return V.sum(axis=1) / T, (V ** 2).sum(axis=1) / (T - 1) - 1.0


def objective_b(model: ModelB, Z: np.ndarray, lam: float) -> float:
    V = latent_series_b(model, Z)
    P = model.var.lag_order
    R = V[:, P:] - lagged_latent_prediction(model.var.coeffs, V)
    return float(np.sum(R ** 2) / R.shape[1] + lam * np.abs(model.var.coeffs).sum())


def _model_b(theta, A):
    return ModelB(VarCoefficients(A.copy()), [SensorMapB.from_theta(t) for t in theta])


def least_squares_duals(theta: np.ndarray, units: int, A: np.ndarray, Z: np.ndarray):
    """Multipliers that best cancel the objective gradient at the starting point.

    Per sensor, (beta_i, mu_i) minimise ||grad f + beta_i grad g1_i + mu_i grad g2_i||
    over theta_i. Starting the duals here instead of at zero avoids the large
    early swings of the primal-dual iteration.
    """
    N, T = Z.shape
    gt = np.empty_like(theta)
    gA = np.empty_like(A)
    zero = np.zeros(N)
    one = np.ones(N)
    K.full_grad_b(Z, theta, units, A, zero, zero, float(T), gt, gA)
    f0 = gt.copy()
    K.full_grad_b(Z, theta, units, A, one, zero, float(T), gt, gA)
    d1 = gt - f0
    K.full_grad_b(Z, theta, units, A, zero, one, float(T), gt, gA)
    d2 = gt - f0
    beta, mu = np.zeros(N), np.zeros(N)
    for i in range(N):
        sol = np.linalg.lstsq(np.column_stack([d1[i], d2[i]]), -f0[i], rcond=None)[0]
        beta[i], mu[i] = sol
    return beta, mu


def train_formulation_b(data: Dataset, cfg: TrainConfig, callback=None) -> FitResult:
    """Latent-error trainer: stochastic primal-dual on the partial Lagrangian.

    Step sizes are per-sample rates: the primal step applied to the
    per-sample Lagrangian gradient is ``eta_p * (T - P)`` and the dual step
    ``eta_d * T``, which undoes the 1/(T-P) and 1/T sample weights so that
    the rates have the same meaning as in the explicit-inversion trainer.
    """
    std = Standardizer.fit(data.z)
    Z = np.ascontiguousarray(std.apply(data.z))
    N, T = Z.shape
    P = cfg.lag
    if T <= P + 1:
        raise ValueError("series too short for the lag order")
    if cfg.map_init == "exact":
        maps = [SensorMapB(np.zeros(cfg.units), np.zeros(cfg.units), np.zeros(cfg.units), 0.0, 1.0)
                for _ in range(N)]
    else:
        z_lo, z_hi = data_range(Z)
        maps = [init_identity_b(z_lo[i], z_hi[i], cfg.units, cfg.outer_slope, cfg.gamma_min)
                for i in range(N)]
    theta = np.ascontiguousarray(np.stack([v.theta for v in maps]))
    model = _model_b(theta, np.zeros((N, N, P)))
    if cfg.var_init == "linear":
        A = fit_linear_var(latent_series_b(model, Z), cfg.lam, cfg).coeffs.copy()
    else:
        A = np.zeros((N, N, P))
    model = _model_b(theta, A)
    if cfg.dual_init == "lstsq" and not cfg.freeze_duals:
        beta, mu = least_squares_duals(theta, cfg.units, A, Z)
    else:
        beta, mu = np.zeros(N), np.zeros(N)
    obj0 = objective_b(model, Z, cfg.lam)
    rng = np.random.default_rng(cfg.seed)
    eta_p, eta_d = cfg.steps.eta_p, cfg.steps.eta_d
    objs, g1s, g2s = [], [], []
    for epoch in range(cfg.epochs):
        order = _sample_order(T, P, cfg, rng)
        status = K.epoch_b(Z, order, theta, cfg.units, A, beta, mu, float(T),
                           eta_p * (T - P), eta_p * (T - P), eta_p * cfg.lam,
                           eta_d * T, cfg.gamma_min, cfg.freeze_duals)
        if status != K.STATUS_OK:
            raise Diverged(f"non-finite dual variables during epoch {epoch}")
        model = _model_b(theta, A)
        obj = objective_b(model, Z, cfg.lam)
        _check_progress(obj, obj0, cfg, epoch)
        g1, g2 = constraint_residuals_b(model, Z)
        objs.append(obj)
        g1s.append(g1)
        g2s.append(g2)
        if callback is not None:
            callback(epoch, model)
    trace = {"objective": np.asarray(objs), "initial": obj0,
             "g1": np.asarray(g1s).reshape(-1, N), "g2": np.asarray(g2s).reshape(-1, N)}
    return FitResult("f_b", model, std, cfg, trace, DualState(beta.copy(), mu.copy()))


def train_linear(data: Dataset, cfg: TrainConfig) -> FitResult:
    std = Standardizer.fit(data.z)
    var, tr = fit_linear_var(std.apply(data.z), cfg.lam, cfg, return_trace=True)
    return FitResult("linear", var, std, cfg, {"objective": tr})


TRAINERS = {"linear": train_linear, "f_a": train_formulation_a, "f_b": train_formulation_b}


def canonical_method(method: str) -> str:
    method = METHOD_ALIASES.get(method, method)
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    return method


def train(method: str, data: Dataset, cfg: TrainConfig) -> FitResult:
    return TRAINERS[canonical_method(method)](data, cfg)


# ---------------------------------------------------------------- prediction


def predict(fit: FitResult, data: Dataset):
    """Standardised (predictions, actuals) for every predictable own sample of ``data``."""
    Z = fit.standardizer.apply(data.z)
    P = fit.var.lag_order
    start = max(P, data.context)
    if isinstance(fit.model, ModelA):
        Zc = clamp_series_a(fit.model.maps, Z)
        pred = predict_series_a(fit.model, Zc, fit.config.bisect_tol)
    elif isinstance(fit.model, ModelB):
        pred = predict_series_b(fit.model, Z, fit.config.bisect_tol)[2]
    else:
        pred = lagged_latent_prediction(fit.model.coeffs, Z)
    return pred[:, start - P:], Z[:, start:]


def prediction_nmse(fit: FitResult, data: Dataset) -> float:
    pred, act = predict(fit, data)
    return nmse(pred, act)


def select_lambda(method: str, train_data: Dataset, val_data: Dataset, cfg: TrainConfig,
                  grid: Sequence[float] = LAMBDA_GRID):
    """Fit every lambda on the grid; keep the lowest validation NMSE.

    Returns (best FitResult, list of (lambda, val_nmse)); failed fits score inf.
    """
    method = canonical_method(method)
    table = []
    best, best_err = None, np.inf
    for lam in grid:
        try:
            fit = train(method, train_data, replace(cfg, lam=float(lam)))
            err = prediction_nmse(fit, val_data)
        except (Diverged, SingularDerivative, NonInvertible) as exc:
            log.warning("lambda=%g failed: %s", lam, exc)
            table.append((float(lam), float("inf")))
            continue
        table.append((float(lam), err))
        if err < best_err:
            best, best_err = fit, err
    if best is None:
        raise Diverged(f"every lambda on the grid failed for {method}")
    best.meta["lambda_grid"] = table
    return best, table
