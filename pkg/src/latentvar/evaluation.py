"""Graph extraction and evaluation metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .data import Dataset
from .errors import NoEdges, NoNonEdges, TooShort, ZeroSignal
from .model import VarCoefficients

SPLIT_FRACTIONS = (0.7, 0.2, 0.1)


def adjacency_from_coeffs(var) -> np.ndarray:
    """Weighted adjacency: l2 norm of each impulse response across lags."""
    c = var.coeffs if isinstance(var, VarCoefficients) else np.asarray(var, dtype=float)
    return np.sqrt(np.sum(c ** 2, axis=2))


def _offdiag_scores(estimate: np.ndarray, truth: np.ndarray, per_lag: bool):
    truth = np.asarray(truth).astype(bool)
    est = np.asarray(estimate, dtype=float)
    N = truth.shape[0]
    mask = ~np.eye(N, dtype=bool)
    if per_lag:
        if est.ndim != 3:
            raise ValueError("per-lag scoring needs the N x N x P coefficient tensor")
        scores = np.abs(est[mask]).ravel()
        labels = np.repeat(truth[mask], est.shape[2])
    else:
        if est.shape != truth.shape:
            raise ValueError("estimate and truth shapes differ")
        scores = est[mask]
        labels = truth[mask]
    if labels.sum() == 0:
        raise NoEdges("ground truth has no off-diagonal edges")
    if (~labels).sum() == 0:
        raise NoNonEdges("ground truth has no off-diagonal non-edges")
    return scores, labels


def pd_pfa(estimate: np.ndarray, truth: np.ndarray, delta: float,
           per_lag: bool = False) -> Tuple[float, float]:
    """(P_D, P_FA) at threshold delta, self-loops excluded.

    With ``per_lag`` the estimate is the coefficient tensor and every lag of a
    pair is thresholded separately against that pair's label.
    """
    scores, labels = _offdiag_scores(estimate, truth, per_lag)
    hit = scores > delta
    return float(hit[labels].mean()), float(hit[~labels].mean())


@dataclass(frozen=True)
class RocCurve:
    points: np.ndarray      # K x 2 array of (P_FA, P_D)
    thresholds: np.ndarray  # K thresholds, +inf first and -inf last

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["p_fa", "p_d"])
            for pfa, pd in self.points:
                wr.writerow([repr(float(pfa)), repr(float(pd))])


def roc_auc(estimate: np.ndarray, truth: np.ndarray, per_lag: bool = False):
    """Sweep the threshold over every distinct score; return (RocCurve, AUROC).

    The area is the trapezoid under the piecewise-linear curve, which equals
    the Mann-Whitney statistic with ties counted as one half.
    """
    scores, labels = _offdiag_scores(estimate, truth, per_lag)
    pos = np.sort(scores[labels])
    neg = np.sort(scores[~labels])
    levels = np.unique(scores)[::-1]
    # count of scores strictly above each level
    pd = (pos.size - np.searchsorted(pos, levels, side="right")) / pos.size
    pfa = (neg.size - np.searchsorted(neg, levels, side="right")) / neg.size
    pts = np.vstack([[0.0, 0.0], np.column_stack([pfa, pd]), [1.0, 1.0]])
    thr = np.concatenate([[np.inf], levels, [-np.inf]])
    auc = float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2.0))
    return RocCurve(pts, thr), auc


def nmse(predictions: np.ndarray, actuals: np.ndarray) -> float:
    predictions = np.asarray(predictions, dtype=float)
    actuals = np.asarray(actuals, dtype=float)
    if predictions.shape != actuals.shape:
        raise ValueError("shape mismatch")
    den = np.sum(actuals ** 2)
    if den == 0:
        raise ZeroSignal("actuals are identically zero")
    return float(np.sum((actuals - predictions) ** 2) / den)


def split_sizes(T: int, fractions: Sequence[float] = SPLIT_FRACTIONS) -> Tuple[int, int, int]:
    if abs(sum(fractions) - 1.0) > 1e-9 or len(fractions) != 3:
        raise ValueError("need three fractions summing to 1")
    n_train = int(round(fractions[0] * T))
    n_val = int(round(fractions[1] * T))
    return n_train, n_val, T - n_train - n_val


def split_dataset(data: Dataset, lag: int, fractions: Sequence[float] = SPLIT_FRACTIONS):
    """Chronological train/val/test split.

    Validation and test carry ``lag`` columns of left context from the
    preceding split so that every one of their own samples can be predicted.
    """
    z = data.z[:, data.context:]
    T = z.shape[1]
    n_train, n_val, n_test = split_sizes(T, fractions)
    if n_train <= lag or n_val < 1 or n_test < 1:
        raise TooShort(f"T={T} too short for lag {lag} with fractions {tuple(fractions)}")
    train = Dataset(z[:, :n_train], data.names, data.truth, 0)
    val = Dataset(z[:, n_train - lag:n_train + n_val], data.names, data.truth, lag)
    test = Dataset(z[:, n_train + n_val - lag:], data.names, data.truth, lag)
    return train, val, test


@dataclass
class EvalReport:
    nmse_train: float
    nmse_val: float
    nmse_test: float
    adjacency: np.ndarray
    auroc: Optional[float] = None
    curve: Optional[RocCurve] = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "nmse_train": self.nmse_train,
            "nmse_val": self.nmse_val,
            "nmse_test": self.nmse_test,
            "adjacency": np.asarray(self.adjacency).tolist(),
            "auroc": self.auroc,
        }
        if self.curve is not None:
            out["roc"] = {"p_fa": self.curve.points[:, 0].tolist(),
                          "p_d": self.curve.points[:, 1].tolist()}
        out.update(self.extra)
        return out


def mean_sd(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0
