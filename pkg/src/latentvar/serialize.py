"""JSON / CSV writers and readers for fitted models, reports and traces."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model import ModelA, ModelB, SensorMapA, SensorMapB, VarCoefficients
from .optim import DualState, StepSizes
from .training import FitResult, Standardizer, TrainConfig

FORMAT_VERSION = 1


def _tensor(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "values": a.ravel().tolist()}


def _untensor(obj) -> np.ndarray:
    return np.asarray(obj["values"], dtype=float).reshape(obj["shape"])


def config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)


def config_from_dict(obj: dict) -> TrainConfig:
    obj = dict(obj)
    if "steps" in obj:
        obj["steps"] = StepSizes(**obj["steps"])
    return TrainConfig(**obj)


def _map_to_dict(fmap) -> dict:
    out = {"alpha": fmap.alpha.tolist(), "w": fmap.w.tolist(), "k": fmap.k.tolist(), "b": fmap.b}
    if isinstance(fmap, SensorMapA):
        out.update(z_lo=fmap.z_lo, z_hi=fmap.z_hi)
    else:
        out["gamma"] = fmap.gamma
    return out


def fit_to_dict(fit: FitResult, names: Sequence[str] = (), run_config: Optional[dict] = None) -> dict:
    out = {
        "format_version": FORMAT_VERSION,
        "method": fit.method,
        "sensors": list(names),
        "standardizer": {"mean": fit.standardizer.mean.tolist(), "scale": fit.standardizer.scale.tolist()},
        "coeffs": _tensor(fit.var.coeffs),
        "train_config": config_to_dict(fit.config),
    }
    if not isinstance(fit.model, VarCoefficients):
        out["maps"] = [_map_to_dict(m) for m in fit.model.maps]
    if fit.duals is not None:
        out["duals"] = {"beta": fit.duals.beta.tolist(), "mu": fit.duals.mu.tolist()}
    if run_config is not None:
        out["run_config"] = run_config
    return out


def fit_from_dict(obj: dict) -> FitResult:
    var = VarCoefficients(_untensor(obj["coeffs"]))
    method = obj["method"]
    if method == "f_a":
        model = ModelA(var, [SensorMapA(np.asarray(m["alpha"]), np.asarray(m["w"]), np.asarray(m["k"]),
                                        m["b"], m["z_lo"], m["z_hi"]) for m in obj["maps"]])
    elif method == "f_b":
        model = ModelB(var, [SensorMapB(np.asarray(m["alpha"]), np.asarray(m["w"]), np.asarray(m["k"]),
                                        m["b"], m["gamma"]) for m in obj["maps"]])
    else:
        model = var
    std = Standardizer(np.asarray(obj["standardizer"]["mean"]), np.asarray(obj["standardizer"]["scale"]))
    duals = None
    if "duals" in obj:
        duals = DualState(np.asarray(obj["duals"]["beta"]), np.asarray(obj["duals"]["mu"]))
    return FitResult(method, model, std, config_from_dict(obj["train_config"]), {}, duals)


def dump_json(obj: dict, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n",
                          encoding="utf-8")


def load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_matrix_csv(mat: np.ndarray, names: Sequence[str], path) -> None:
    """Square matrix with a header row and a leading row-name column."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([""] + list(names))
        for name, row in zip(names, np.asarray(mat, dtype=float)):
            wr.writerow([name] + [repr(float(x)) for x in row])


def write_trace_csv(trace: dict, path) -> None:
    """Per-epoch objective, plus the worst constraint residuals when present."""
    obj = np.asarray(trace.get("objective", []), dtype=float)
    cols = {"objective": obj}
    if "g1" in trace:
        cols["max_abs_g1"] = np.abs(trace["g1"]).max(axis=1) if len(trace["g1"]) else np.zeros(0)
        cols["max_abs_g2"] = np.abs(trace["g2"]).max(axis=1) if len(trace["g2"]) else np.zeros(0)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["epoch"] + list(cols))
        for e in range(obj.shape[0]):
            wr.writerow([e] + [repr(float(c[e])) for c in cols.values()])
