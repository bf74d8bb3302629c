"""Dataset container and the CSV / truth-sidecar file formats."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DegenerateData


@dataclass(frozen=True)
class GroundTruth:
    """Binary adjacency (entry (n, n2) = 1 iff n2 drives n) plus generator details."""

    adjacency: np.ndarray
    coeffs: Optional[np.ndarray] = None
    generator: dict = field(default_factory=dict)

    def __post_init__(self):
        adj = np.asarray(self.adjacency).astype(int)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be square")
        object.__setattr__(self, "adjacency", adj)

    def to_json(self) -> dict:
        out = {"adjacency": self.adjacency.tolist(), "generator": self.generator}
        if self.coeffs is not None:
            out["coeffs"] = {"shape": list(self.coeffs.shape), "values": self.coeffs.tolist()}
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        coeffs = None
        if obj.get("coeffs") is not None:
            coeffs = np.asarray(obj["coeffs"]["values"], dtype=float).reshape(obj["coeffs"]["shape"])
        return cls(np.asarray(obj["adjacency"]), coeffs, obj.get("generator", {}))


@dataclass(frozen=True)
class Dataset:
    """N x T measurements.

    ``context`` leading columns are history borrowed from a preceding split:
    they feed lagged predictions but are not themselves prediction targets
    beyond what the lag order already excludes.
    """

    z: np.ndarray
    names: tuple = ()
    truth: Optional[GroundTruth] = None
    context: int = 0

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        if z.ndim != 2:
            raise ValueError("measurements must be an N x T matrix")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        names = tuple(self.names) or tuple(f"x{i}" for i in range(z.shape[0]))
        if len(names) != z.shape[0]:
            raise ValueError("one name per sensor required")
        object.__setattr__(self, "names", names)

    @property
    def n_sensors(self) -> int:
        return self.z.shape[0]

    @property
    def length(self) -> int:
        """Number of own (non-context) samples."""
        return self.z.shape[1] - self.context

    def check_nondegenerate(self) -> None:
        sd = self.z.std(axis=1)
        if np.any(sd == 0) or not np.all(np.isfinite(self.z)):
            bad = [self.names[i] for i in np.flatnonzero(~(sd > 0))]
            raise DegenerateData(f"constant or non-finite sensors: {bad}")


class CsvFormatError(ValueError):
    pass


def truth_path_for(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".truth.json")


def write_csv(data: Dataset, path) -> None:
    """One row per time step, header of sensor names, 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(data.names)
        for row in data.z.T:
            wr.writerow([repr(float(x)) for x in row])


def read_csv(path, load_truth: bool = True) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    names = rows[0]
    values = []
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(names):
            raise CsvFormatError(f"{path}: row {r} has {len(row)} fields, expected {len(names)}")
        try:
            values.append([float(x) for x in row])
        except ValueError:
            col = next(c for c, x in enumerate(row) if not _is_float(x))
            raise CsvFormatError(f"{path}: row {r}, column {col + 1} ({names[col]}): "
                                 f"cannot parse {row[col]!r}") from None
    if not values:
        raise CsvFormatError(f"{path}: no data rows")
    truth = None
    tp = truth_path_for(path)
    if load_truth and tp.exists():
        truth = read_truth(tp)
    return Dataset(np.asarray(values).T, tuple(names), truth)


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_truth(truth: GroundTruth, path) -> None:
    Path(path).write_text(json.dumps(truth.to_json(), indent=1, sort_keys=True) + "\n")


def read_truth(path) -> GroundTruth:
    return GroundTruth.from_json(json.loads(Path(path).read_text()))
