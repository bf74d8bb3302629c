"""Command-line interface: generate | train | eval | experiment.

Every option may also come from a JSON ``--config`` file (keys are the
option names with dashes replaced by underscores); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .data import CsvFormatError, Dataset, read_csv, truth_path_for, write_csv, write_truth
from .errors import (
    DegenerateData,
    Diverged,
    FitFailed,
    LatentVarError,
    NoEdges,
    NoNonEdges,
    NonInvertible,
    OutOfImage,
    SingularDerivative,
    TooShort,
    Unstable,
    ZeroSignal,
)
from .evaluation import split_dataset
from .experiments import (
    SUMMARY_FIELDS,
    DatasetSpec,
    ExperimentCell,
    ExperimentManifest,
    evaluate_fit,
    manifest_to_dict,
    run_manifest,
    summarize,
    write_rows,
)
from .optim import StepSizes
from .serialize import dump_json, fit_from_dict, fit_to_dict, load_json, write_matrix_csv, write_trace_csv
from .training import LAMBDA_GRID, TrainConfig, canonical_method, select_lambda, train

log = logging.getLogger("latentvar")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

DATA_ERRORS = (CsvFormatError, DegenerateData, TooShort, OutOfImage, ZeroSignal, NoEdges,
               NoNonEdges, Unstable, FileNotFoundError, IsADirectoryError)
FIT_ERRORS = (Diverged, SingularDerivative, NonInvertible, FitFailed)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Fully resolved options of one invocation (embedded in every output)."""

    command: str
    seed: int = 0
    threads: int = 0
    out: Optional[str] = None
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, "seed": self.seed, "threads": self.threads,
                "out": self.out, **self.options}


GENERATE_DEFAULTS = dict(model="nlvar", n=10, p=4, t=1000, edge_prob=0.15, noise_sd=None,
                         units=10, force=10.0, dt=0.01, subsample=5, burn_in=1000)
TRAIN_DEFAULTS = dict(method="f_b", data=None, lam="auto", epochs=20, units=10, lag=4,
                      eta=StepSizes.eta, eta_p=StepSizes.eta_p, eta_d=StepSizes.eta_d,
                      sample_order="sequential", outer_slope=2.0, gamma_min=1e-3,
                      bisect_tol=1e-10)
EVAL_DEFAULTS = dict(model_file=None, data=None)
EXPERIMENT_DEFAULTS = dict(manifest=None, methods="f_a,f_b,linear", seeds=10, lam="auto",
                           epochs=20, lag=None, **{k: v for k, v in GENERATE_DEFAULTS.items()})
DEFAULTS = {"generate": GENERATE_DEFAULTS, "train": TRAIN_DEFAULTS, "eval": EVAL_DEFAULTS,
            "experiment": EXPERIMENT_DEFAULTS}


def _add_generator_flags(p):
    S = argparse.SUPPRESS
    p.add_argument("--model", choices=("nlvar", "lorenz96"), default=S)
    p.add_argument("--n", type=int, default=S, help="number of sensors")
    p.add_argument("--p", type=int, default=S, help="generator lag order (nlvar)")
    p.add_argument("--t", type=int, default=S, help="number of samples")
    p.add_argument("--edge-prob", type=float, default=S)
    p.add_argument("--noise-sd", type=float, default=S)
    p.add_argument("--units", type=int, default=S)
    p.add_argument("--force", type=float, default=S, help="Lorenz-96 forcing F")
    p.add_argument("--dt", type=float, default=S)
    p.add_argument("--subsample", type=int, default=S)
    p.add_argument("--burn-in", type=int, default=S)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--threads", type=int, default=S, help="worker processes (0: all cores)")
    common.add_argument("--config", default=S, help="JSON file of option values")
    common.add_argument("-o", "--out", default=S)
    common.add_argument("-v", "--verbose", action="store_true", default=S)

    parser = argparse.ArgumentParser(prog="latentvar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic dataset + truth sidecar")
    _add_generator_flags(g)

    t = sub.add_parser("train", parents=[common], help="fit one method to a dataset CSV")
    t.add_argument("--method", default=S, help="linear | f_a | f_b")
    t.add_argument("--data", default=S)
    t.add_argument("--lambda", dest="lam", default=S, help="sparsity weight or 'auto'")
    t.add_argument("--epochs", type=int, default=S)
    t.add_argument("--units", type=int, default=S)
    t.add_argument("--lag", type=int, default=S)
    t.add_argument("--eta", type=float, default=S)
    t.add_argument("--eta-p", type=float, default=S)
    t.add_argument("--eta-d", type=float, default=S)
    t.add_argument("--sample-order", choices=("sequential", "shuffled"), default=S)
    t.add_argument("--outer-slope", type=float, default=S)
    t.add_argument("--gamma-min", type=float, default=S)
    t.add_argument("--bisect-tol", type=float, default=S)

    e = sub.add_parser("eval", parents=[common], help="score a saved model on a dataset CSV")
    e.add_argument("--model", dest="model_file", default=S)
    e.add_argument("--data", default=S)

    x = sub.add_parser("experiment", parents=[common], help="Monte Carlo AUROC table")
    x.add_argument("--manifest", default=S, help="JSON manifest of cells")
    x.add_argument("--methods", default=S, help="comma-separated methods (without --manifest)")
    x.add_argument("--seeds", type=int, default=S)
    x.add_argument("--lambda", dest="lam", default=S)
    x.add_argument("--epochs", type=int, default=S)
    x.add_argument("--lag", type=int, default=S)
    _add_generator_flags(x)
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge defaults < config file < explicit flags."""
    given = vars(args).copy()
    command = given.pop("command")
    merged = {"seed": 0, "threads": 0, "out": None, "verbose": False, **DEFAULTS[command]}
    cfg_path = given.pop("config", None)
    if cfg_path is not None:
        try:
            file_vals = json.loads(Path(cfg_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {cfg_path}: {exc}") from None
        if not isinstance(file_vals, dict):
            raise ConfigError("config file must hold a JSON object")
        file_vals = {k.replace("-", "_"): v for k, v in file_vals.items()}
        if command == "train" and "lambda" in file_vals:
            file_vals["lam"] = file_vals.pop("lambda")
        unknown = set(file_vals) - set(merged) - {"cells"}
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        merged.update(file_vals)
    merged.update(given)
    seed, threads, out = merged.pop("seed"), merged.pop("threads"), merged.pop("out")
    if threads == 0:
        threads = os.cpu_count() or 1
    return RunConfig(command, int(seed), int(threads), out, merged)


def _parse_lambda(value):
    if isinstance(value, str) and value.lower() == "auto":
        return None
    try:
        lam = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"lambda must be a number or 'auto', got {value!r}") from None
    if lam < 0:
        raise ConfigError("lambda must be nonnegative")
    return lam


def _train_config(o: dict, seed: int, lam: float = 0.0) -> TrainConfig:
    try:
        return TrainConfig(lam=lam, steps=StepSizes(o["eta"], o["eta_p"], o["eta_d"]),
                           epochs=o["epochs"], units=o["units"], lag=o["lag"], seed=seed,
                           gamma_min=o["gamma_min"], bisect_tol=o["bisect_tol"],
                           sample_order=o["sample_order"], outer_slope=o["outer_slope"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _dataset_spec(o: dict) -> DatasetSpec:
    try:
        return DatasetSpec(o["model"], o["n"], o["t"], o["p"], o["edge_prob"], o["noise_sd"],
                           o["units"], o["force"], o["dt"], o["subsample"], o["burn_in"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ------------------------------------------------------------------ commands


def cmd_generate(rc: RunConfig) -> int:
    o = rc.options
    if rc.out is None:
        raise ConfigError("generate needs -o/--out")
    spec = _dataset_spec(o)
    try:
        data = spec.build(rc.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    truth = data.truth
    gen = dict(truth.generator, run_config=rc.to_dict())
    truth = type(truth)(truth.adjacency, truth.coeffs, gen)
    out = Path(rc.out)
    write_csv(data, out)
    write_truth(truth, truth_path_for(out))
    log.info("wrote %s (%d samples x %d sensors)", out, data.z.shape[1], data.n_sensors)
    return EXIT_OK


def _out_dir(rc: RunConfig, default: str) -> Path:
    d = Path(rc.out or default)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_train(rc: RunConfig) -> int:
    o = rc.options
    if not o.get("data"):
        raise ConfigError("train needs --data")
    try:
        method = canonical_method(o["method"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    lam = _parse_lambda(o["lam"])
    data = read_csv(o["data"])
    data.check_nondegenerate()
    cfg = _train_config(o, rc.seed, lam or 0.0)
    tr, va, te = split_dataset(data, cfg.lag)
    if lam is None:
        fit, _ = select_lambda(method, tr, va, cfg, LAMBDA_GRID)
    else:
        fit = train(method, tr, cfg)
    report = evaluate_fit(fit, tr, va, te, data.truth)
    outdir = _out_dir(rc, "run")
    runcfg = rc.to_dict()
    dump_json(fit_to_dict(fit, data.names, runcfg), outdir / "model.json")
    write_matrix_csv(report.adjacency, data.names, outdir / "adjacency.csv")
    write_trace_csv(fit.trace, outdir / "trace.csv")
    if report.curve is not None:
        report.curve.write_csv(outdir / "roc.csv")
    dump_json(dict(report.to_json(), run_config=runcfg), outdir / "report.json")
    log.info("%s: nmse train %.4f val %.4f test %.4f%s", method, report.nmse_train,
             report.nmse_val, report.nmse_test,
             "" if report.auroc is None else f", auroc {report.auroc:.4f}")
    return EXIT_OK


def cmd_eval(rc: RunConfig) -> int:
    o = rc.options
    if not o.get("model_file") or not o.get("data"):
        raise ConfigError("eval needs --model and --data")
    try:
        fit = fit_from_dict(load_json(o["model_file"]))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse model file: {exc}") from None
    data = read_csv(o["data"])
    if data.n_sensors != fit.var.n_sensors:
        raise CsvFormatError(f"dataset has {data.n_sensors} sensors, model expects {fit.var.n_sensors}")
    tr, va, te = split_dataset(data, fit.var.lag_order)
    report = evaluate_fit(fit, tr, va, te, data.truth)
    outdir = _out_dir(rc, "eval")
    if report.curve is not None:
        report.curve.write_csv(outdir / "roc.csv")
    dump_json(dict(report.to_json(), run_config=rc.to_dict()), outdir / "report.json")
    return EXIT_OK


def _manifest(rc: RunConfig) -> ExperimentManifest:
    o = rc.options
    train_cfg = TrainConfig(epochs=o["epochs"])
    try:
        if o.get("manifest"):
            return ExperimentManifest.from_json(o["manifest"], train_cfg)
        if o.get("cells"):
            return ExperimentManifest.from_dict({"cells": o["cells"]}, train_cfg)
        lam = _parse_lambda(o["lam"])
        grid = LAMBDA_GRID if lam is None else (lam,)
        spec = _dataset_spec(o)
        seeds = tuple(range(rc.seed, rc.seed + int(o["seeds"])))
        cells = [ExperimentCell(m.strip(), spec, seeds, grid, o.get("lag"))
                 for m in str(o["methods"]).split(",") if m.strip()]
        return ExperimentManifest(tuple(cells), train_cfg)
    except (ValueError, KeyError, TypeError, OSError) as exc:
        raise ConfigError(f"invalid experiment manifest: {exc}") from None


def cmd_experiment(rc: RunConfig) -> int:
    manifest = _manifest(rc)
    rows = run_manifest(manifest, rc.threads)
    for r in rows:
        if r["error"]:
            log.warning("%s %s seed %d failed: %s", r["dataset"], r["method"], r["seed"], r["error"])
    summary = summarize(rows)
    out = Path(rc.out or "summary.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_rows(summary, out, SUMMARY_FIELDS)
    write_rows(rows, out.with_name(out.stem + ".runs.csv"))
    dump_json({"run_config": rc.to_dict(), "manifest": manifest_to_dict(manifest)},
              out.with_name(out.stem + ".config.json"))
    for s in summary:
        print(f"{s['dataset']:<32} {s['method']:<7} AUROC {s['auroc']}  (runs {s['runs']}, failed {s['failed']})")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
            "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage, 0 on --help
        return int(exc.code or 0)
    try:
        rc = resolve(args)
        logging.basicConfig(level=logging.INFO if rc.options.get("verbose") else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return COMMANDS[rc.command](rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FIT_ERRORS as exc:
        print(f"training failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except DATA_ERRORS as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
