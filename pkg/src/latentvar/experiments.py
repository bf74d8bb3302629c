"""Monte Carlo experiment plumbing: dataset specs, single runs, manifests
and summary tables."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import LatentVarError
from .evaluation import EvalReport, adjacency_from_coeffs, mean_sd, roc_auc, split_dataset
from .model import ModelB, eval_v_prime, latent_series_b, predict_series_b
from .synth import LorenzConfig, gen_lorenz96, make_nlvar_dataset
from .training import (
    LAMBDA_GRID,
    FitResult,
    TrainConfig,
    canonical_method,
    predict,
    prediction_nmse,
    select_lambda,
    train,
)

log = logging.getLogger(__name__)

DATA_MODELS = ("nlvar", "lorenz96")
LORENZ_LAG = 2


@dataclass(frozen=True)
class DatasetSpec:
    model: str = "nlvar"
    n: int = 10
    t: int = 1000
    p: int = 4                  # generator lag order (nlvar)
    edge_prob: float = 0.15
    noise_sd: Optional[float] = None  # default: 0.5 (nlvar innovations), 0.01 (lorenz96)
    units: int = 10             # generator map units (nlvar)
    force: float = 10.0
    dt: float = 0.01
    subsample: int = 5
    burn_in: int = 1000         # lorenz96 raw steps

    def __post_init__(self):
        if self.model not in DATA_MODELS:
            raise ValueError(f"unknown data model {self.model!r}; choose from {DATA_MODELS}")

    def default_lag(self) -> int:
        return self.p if self.model == "nlvar" else LORENZ_LAG

    def build(self, seed: int) -> Dataset:
        if self.model == "nlvar":
            sd = 0.5 if self.noise_sd is None else self.noise_sd
            data, _, _ = make_nlvar_dataset(self.n, self.p, self.t, seed, self.edge_prob, sd, self.units)
            return data
        sd = 0.01 if self.noise_sd is None else self.noise_sd
        return gen_lorenz96(LorenzConfig(self.n, self.force, self.dt, self.subsample, sd,
                                         self.t, seed, self.burn_in))

    def label(self) -> str:
        if self.model == "nlvar":
            return f"nlvar(N={self.n},P={self.p},T={self.t})"
        return f"lorenz96(N={self.n},F={self.force:g},T={self.t})"


def error_bound_terms(model: ModelB, z: np.ndarray, tol: float = 1e-10, grid_points: int = 4001):
    """(measurement MSE, latent MSE, max_n L_n) for one-step predictions on z (standardised).

    The Lipschitz constant of each r_n = v_n^-1 is taken over a dense grid
    spanning the observed measurements and the predictions, plus the
    observed points themselves.
    """
    P = model.var.lag_order
    V, Yhat, Zhat = predict_series_b(model, z, tol)
    Zt = z[:, P:]
    meas = float(np.sum(np.mean((Zhat - Zt) ** 2, axis=1)))
    lat = float(np.sum(np.mean((Yhat - V) ** 2, axis=1)))
    L = []
    for i, vmap in enumerate(model.maps):
        lo = min(Zt[i].min(), Zhat[i].min())
        hi = max(Zt[i].max(), Zhat[i].max())
        grid = np.concatenate([np.linspace(lo, hi, grid_points), Zt[i], Zhat[i]])
        L.append(1.0 / np.min(eval_v_prime(vmap, grid)))
    return meas, lat, float(max(L))


def evaluate_fit(fit: FitResult, train_data: Dataset, val_data: Dataset, test_data: Dataset,
                 truth=None) -> EvalReport:
    curve, auc = None, None
    adj = adjacency_from_coeffs(fit.var)
    if truth is not None:
        curve, auc = roc_auc(adj, truth.adjacency)
    extra = {"method": fit.method, "lambda": fit.config.lam}
    if "lambda_grid" in fit.meta:
        extra["lambda_grid"] = [{"lambda": l, "val_nmse": e} for l, e in fit.meta["lambda_grid"]]
    return EvalReport(prediction_nmse(fit, train_data), prediction_nmse(fit, val_data),
                      prediction_nmse(fit, test_data), adj, auc, curve, extra)


def run_single(method: str, spec: DatasetSpec, seed: int, cfg: Optional[TrainConfig] = None,
               grid: Optional[Sequence[float]] = LAMBDA_GRID, lag: Optional[int] = None) -> dict:
    """Generate, split, fit (grid-selected lambda unless ``grid`` is None) and score one run."""
    method = canonical_method(method)
    cfg = cfg or TrainConfig()
    cfg = replace(cfg, lag=lag or spec.default_lag(), seed=seed)
    t0 = time.perf_counter()
    data = spec.build(seed)
    tr, va, te = split_dataset(data, cfg.lag)
    if grid is None:
        fit = train(method, tr, cfg)
    else:
        fit, _ = select_lambda(method, tr, va, cfg, grid)
    rep = evaluate_fit(fit, tr, va, te, data.truth)
    return {"method": method, "dataset": spec.label(), "seed": seed, "lag": cfg.lag,
            "lambda": fit.config.lam, "auroc": rep.auroc, "nmse_train": rep.nmse_train,
            "nmse_val": rep.nmse_val, "nmse_test": rep.nmse_test,
            "seconds": time.perf_counter() - t0, "error": ""}


@dataclass(frozen=True)
class ExperimentCell:
    method: str
    dataset: DatasetSpec
    seeds: tuple = tuple(range(10))
    grid: Optional[tuple] = LAMBDA_GRID
    lag: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "method", canonical_method(self.method))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        if not self.seeds:
            raise ValueError("a cell needs at least one seed")


@dataclass(frozen=True)
class ExperimentManifest:
    cells: tuple
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if not self.cells:
            raise ValueError("manifest has no cells")

    @classmethod
    def from_dict(cls, obj: dict, train_cfg: Optional[TrainConfig] = None) -> "ExperimentManifest":
        cells = []
        for c in obj["cells"]:
            c = dict(c)
            ds = DatasetSpec(**c.pop("dataset", {}))
            if "seeds" in c and isinstance(c["seeds"], int):
                c["seeds"] = range(c["seeds"])
            if c.get("grid") == "auto":
                c["grid"] = LAMBDA_GRID
            elif isinstance(c.get("grid"), (int, float)):
                c["grid"] = (float(c["grid"]),)
            cells.append(ExperimentCell(dataset=ds, **c))
        return cls(tuple(cells), train_cfg or TrainConfig())

    @classmethod
    def from_json(cls, path, train_cfg: Optional[TrainConfig] = None) -> "ExperimentManifest":
        return cls.from_dict(json.loads(Path(path).read_text()), train_cfg)

    def tasks(self):
        for cell in self.cells:
            for seed in cell.seeds:
                yield cell, seed


def _run_task(args) -> dict:
    cell, seed, cfg = args
    try:
        return run_single(cell.method, cell.dataset, seed, cfg, cell.grid, cell.lag)
    except (LatentVarError, ValueError, FloatingPointError) as exc:
        return {"method": cell.method, "dataset": cell.dataset.label(), "seed": seed,
                "lag": cell.lag or cell.dataset.default_lag(), "lambda": float("nan"),
                "auroc": float("nan"), "nmse_train": float("nan"), "nmse_val": float("nan"),
                "nmse_test": float("nan"), "seconds": 0.0,
                "error": f"{type(exc).__name__}: {exc}"}


def run_manifest(manifest: ExperimentManifest, threads: int = 1) -> List[dict]:
    """Run every (cell, seed) task; results come back in a deterministic sorted order."""
    tasks = [(cell, seed, manifest.train) for cell, seed in manifest.tasks()]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_task, tasks))
    else:
        rows = [_run_task(t) for t in tasks]
    return sorted(rows, key=lambda r: (r["dataset"], r["method"], r["seed"]))


SUMMARY_FIELDS = ("dataset", "method", "runs", "failed", "auroc_mean", "auroc_sd", "auroc",
                  "nmse_test_mean", "nmse_test_sd")


def summarize(rows: Sequence[dict]) -> List[dict]:
    groups = {}
    for r in rows:
        groups.setdefault((r["dataset"], r["method"]), []).append(r)
    out = []
    for (ds, method), rs in sorted(groups.items()):
        ok = [r for r in rs if not r["error"]]
        am, asd = mean_sd([r["auroc"] for r in ok]) if ok else (float("nan"), float("nan"))
        nm, nsd = mean_sd([r["nmse_test"] for r in ok]) if ok else (float("nan"), float("nan"))
        out.append({"dataset": ds, "method": method, "runs": len(rs), "failed": len(rs) - len(ok),
                    "auroc_mean": am, "auroc_sd": asd, "auroc": f"{am:.4f} ± {asd:.4f}",
                    "nmse_test_mean": nm, "nmse_test_sd": nsd})
    return out


def write_rows(rows: Sequence[dict], path, fields: Optional[Sequence[str]] = None) -> None:
    fields = list(fields or (rows[0].keys() if rows else []))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def manifest_to_dict(manifest: ExperimentManifest) -> dict:
    return {"cells": [{"method": c.method, "dataset": asdict(c.dataset), "seeds": list(c.seeds),
                       "grid": list(c.grid) if c.grid is not None else None, "lag": c.lag}
                      for c in manifest.cells]}
