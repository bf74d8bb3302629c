"""Synthetic benchmarks with known dependency graphs: sparse nonlinear VAR
processes seen through random monotone sensors, and Lorenz-96."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels as K
from .data import Dataset, GroundTruth
from .errors import Unstable
from .model import SensorMapA, VarCoefficients

SPECTRAL_RADIUS = 0.95
BURN_IN = 200
T_LONG = 10000
UNSTABLE_NORM = 1e6

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spectral_radius(var: VarCoefficients) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(var.companion()))))


def gen_var_coeffs(n: int, p: int, edge_prob: float = 0.15, seed: SeedLike = None,
                   radius: float = SPECTRAL_RADIUS) -> Tuple[VarCoefficients, GroundTruth]:
    """Sparse random VAR rescaled so the companion matrix has spectral radius ``radius``.

    Each pair (n, n2), self-pairs included, is active with probability
    ``edge_prob`` at all lags at once; active entries are Uniform(-1, 1).
    Multiplying lag p by s**p scales every companion eigenvalue by s.
    """
    if not 0 < edge_prob < 1:
        raise ValueError("edge_prob must lie in (0, 1)")
    rng = _rng(seed)
    while True:
        support = rng.random((n, n)) < edge_prob
        if not support.any():
            var = VarCoefficients.zeros(n, p)
            return var, GroundTruth(np.zeros((n, n), dtype=int), var.coeffs.copy(),
                                    {"edge_prob": edge_prob, "radius": 0.0})
        vals = rng.uniform(-1.0, 1.0, size=(n, n, p)) * support[:, :, None]
        rho = spectral_radius(VarCoefficients(vals))
        # a nilpotent pattern (e.g. strictly triangular support) cannot be
        # rescaled to the target radius, so draw the whole graph again
        if rho > 1e-8:
            break
    s = radius / rho
    coeffs = vals * s ** np.arange(1, p + 1)[None, None, :]
    var = VarCoefficients(coeffs)
    return var, GroundTruth(support.astype(int), coeffs, {"edge_prob": edge_prob, "radius": radius})


def random_sensor_map(units: int = 10, z_lo: float = -2.0, z_hi: float = 2.0,
                      seed: SeedLike = None) -> SensorMapA:
    rng = _rng(seed)
    alpha = rng.uniform(0.0, 1.0, units)
    alpha *= (z_hi - z_lo) / alpha.sum()
    w = rng.uniform(0.5, 3.0, units)
    k = rng.uniform(-3.0, 3.0, units)
    return SensorMapA(alpha, w, k, z_lo, z_lo, z_hi)


def simulate_var(var: VarCoefficients, t: int, noise_sd: float, seed: SeedLike = None,
                 burn_in: int = BURN_IN) -> np.ndarray:
    """Latent N x t trajectory driven by Gaussian innovations, burn-in discarded."""
    rng = _rng(seed)
    N, P = var.n_sensors, var.lag_order
    total = t + burn_in
    U = rng.normal(0.0, noise_sd, size=(total, N))
    Y = np.zeros((total + P, N))
    A = [var.coeffs[:, :, p] for p in range(P)]
    for s in range(total):
        y = U[s].copy()
        for p in range(P):
            y += A[p] @ Y[s + P - p - 1]
        Y[s + P] = y
        if not np.abs(y).max() < UNSTABLE_NORM:
            raise Unstable(f"latent trajectory exceeded {UNSTABLE_NORM:g} at step {s}")
    return Y[P + burn_in:].T.copy()


def gen_nlvar(var: VarCoefficients, maps: Sequence[SensorMapA], t: int, noise_sd: float = 0.5,
              seed: SeedLike = None, burn_in: int = BURN_IN, t_long: int = T_LONG,
              truth: Optional[GroundTruth] = None):
    """Measurements z = f(y) of a latent VAR trajectory; returns (Dataset, latent Y).

    A trajectory of max(t, t_long) samples is always simulated and then
    truncated, so shorter datasets from one seed are prefixes of longer ones.
    """
    if len(maps) != var.n_sensors:
        raise ValueError("one sensor map per sensor required")
    Y = simulate_var(var, max(t, t_long), noise_sd, seed, burn_in)[:, :t]
    theta = np.stack([f.theta for f in maps])
    m = maps[0].units
    Z = K.apply_maps(theta, m, np.ascontiguousarray(Y))
    return Dataset(Z, truth=truth), Y


def make_nlvar_dataset(n: int = 10, p: int = 4, t: int = 1000, seed: int = 0,
                       edge_prob: float = 0.15, noise_sd: float = 0.5, units: int = 10):
    """Full NL-VAR benchmark draw; returns (Dataset with truth, latent Y, generator maps)."""
    s_var, s_maps, s_noise = np.random.SeedSequence(seed).spawn(3)
    var, truth = gen_var_coeffs(n, p, edge_prob, np.random.default_rng(s_var))
    mrng = np.random.default_rng(s_maps)
    maps = [random_sensor_map(units, seed=mrng) for _ in range(n)]
    gen = dict(truth.generator, model="nlvar", n=n, p=p, t=t, seed=seed,
               noise_sd=noise_sd, units=units,
               maps=[{"alpha": f.alpha.tolist(), "w": f.w.tolist(), "k": f.k.tolist(),
                      "b": f.b, "z_lo": f.z_lo, "z_hi": f.z_hi} for f in maps])
    truth = GroundTruth(truth.adjacency, truth.coeffs, gen)
    data, Y = gen_nlvar(var, maps, t, noise_sd, np.random.default_rng(s_noise), truth=truth)
    return data, Y, maps


# ------------------------------------------------------------------ Lorenz-96


@dataclass(frozen=True)
class LorenzConfig:
    n: int = 10
    force: float = 10.0
    dt: float = 0.01
    subsample: int = 5
    noise_sd: float = 0.01
    t_total: int = 1000   # recorded samples
    seed: int = 0
    burn_in: int = 1000   # raw integration steps discarded
    perturb: float = 0.01

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("Lorenz-96 needs n >= 4")
        if not self.dt > 0 or self.subsample < 1 or self.noise_sd < 0 or self.t_total < 1:
            raise ValueError("invalid Lorenz-96 integration settings")


def lorenz_rhs(x: np.ndarray, force: float) -> np.ndarray:
    return (np.roll(x, -1) - np.roll(x, 2)) * np.roll(x, 1) - x + force


def rk4_step(x: np.ndarray, force: float, dt: float) -> np.ndarray:
    k1 = lorenz_rhs(x, force)
    k2 = lorenz_rhs(x + 0.5 * dt * k1, force)
    k3 = lorenz_rhs(x + 0.5 * dt * k2, force)
    k4 = lorenz_rhs(x + dt * k3, force)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def lorenz_truth(n: int) -> np.ndarray:
    """x_i depends on x_{i-2}, x_{i-1}, x_i and x_{i+1} (cyclic)."""
    adj = np.zeros((n, n), dtype=int)
    for i in range(n):
        for d in (-2, -1, 0, 1):
            adj[i, (i + d) % n] = 1
    return adj


def integrate_lorenz96(x0: np.ndarray, force: float, dt: float, steps: int) -> np.ndarray:
    """All states x[0..steps] (rows) of an RK4 integration."""
    out = np.empty((steps + 1, x0.shape[0]))
    out[0] = x = np.asarray(x0, dtype=float)
    for s in range(steps):
        x = rk4_step(x, force, dt)
        out[s + 1] = x
    return out


def gen_lorenz96(cfg: LorenzConfig) -> Dataset:
    """Noisy subsampled Lorenz-96 trajectory; the seed only drives the observation noise."""
    x = np.full(cfg.n, float(cfg.force))
    x[0] += cfg.perturb
    for _ in range(cfg.burn_in):
        x = rk4_step(x, cfg.force, cfg.dt)
    traj = integrate_lorenz96(x, cfg.force, cfg.dt, cfg.subsample * (cfg.t_total - 1))
    X = traj[::cfg.subsample].T
    rng = np.random.default_rng(cfg.seed)
    Z = X + rng.normal(0.0, cfg.noise_sd, size=X.shape) if cfg.noise_sd > 0 else X.copy()
    truth = GroundTruth(lorenz_truth(cfg.n), None, dict(asdict(cfg), model="lorenz96"))
    return Dataset(Z, truth=truth)
