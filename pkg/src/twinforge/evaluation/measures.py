"""Error measures between a prediction and a reference series."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass
from pathlib import Path

import numpy as np

MEASURES = ("rmse", "mape", "max", "median", "iqr", "r2")


@dataclass(frozen=True)
class MeasureSet:
    """RMSE, MAX, MEDIAN and IQR in K; MAPE in percent; R2 dimensionless."""

    rmse: float
    mape: float
    max: float
    median: float
    iqr: float
    r2: float

    def as_tuple(self):
        return astuple(self)

    def as_dict(self):
        return dict(zip(MEASURES, self.as_tuple()))


def quartiles(x):
    """Q1 and Q3 by linear interpolation between order statistics.

    For sorted values x_0..x_{n-1}, Q(p) sits at fractional index p (n - 1).
    """
    q1, q3 = np.percentile(np.asarray(x, dtype=float), [25.0, 75.0], method="linear")
    return float(q1), float(q3)


def error_measures(pred, ref) -> MeasureSet:
    """Signed error e = pred - ref, pooled over all entries of the arrays.

    Multi-channel inputs (N, c) are flattened, so the measures describe the
    stacked channels as one series.
    """
    pred = np.asarray(pred, dtype=float).ravel()
    ref = np.asarray(ref, dtype=float).ravel()
    if pred.shape != ref.shape:
        raise ValueError(f"length mismatch: {pred.size} vs {ref.size}")
    if pred.size < 2:
        raise ValueError("need at least two samples")
    if np.any(ref == 0):
        raise ValueError("reference contains zeros; MAPE undefined")
    e = pred - ref
    ss_tot = float(np.sum((ref - ref.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("constant reference; R2 undefined")
    q1, q3 = quartiles(e)
    return MeasureSet(
        rmse=math.sqrt(float(np.mean(e * e))),
        mape=100.0 * float(np.mean(np.abs(e) / np.abs(ref))),
        max=float(np.max(np.abs(e))),
        median=float(np.median(e)),
        iqr=q3 - q1,
        r2=1.0 - float(np.sum(e * e)) / ss_tot,
    )


def aggregate(rows) -> MeasureSet:
    """Per-measure arithmetic mean of a collection of MeasureSets."""
    rows = list(rows)
    if not rows:
        raise ValueError("cannot aggregate an empty set")
    arr = np.array([r.as_tuple() for r in rows])
    return MeasureSet(*(float(v) for v in arr.mean(axis=0)))


class EvalTable:
    """Measures per (rom_id, signal_id) cell."""

    def __init__(self, rows=None):
        self.rows: dict[tuple[str, str], MeasureSet] = dict(rows or {})

    def add(self, rom_id, signal_id, measures: MeasureSet):
        self.rows[(rom_id, signal_id)] = measures

    def rom_ids(self):
        return sorted({r for r, _ in self.rows})

    def aggregate(self, rom_id, signal_ids) -> MeasureSet:
        missing = [s for s in signal_ids if (rom_id, s) not in self.rows]
        if missing:
            raise KeyError(f"{rom_id}: no rows for {missing}")
        return aggregate(self.rows[(rom_id, s)] for s in signal_ids)

    def aggregates(self, signal_ids, rom_ids=None) -> dict[str, MeasureSet]:
        return {r: self.aggregate(r, signal_ids) for r in (rom_ids or self.rom_ids())}

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rom_id", "signal_id", *MEASURES])
            for (rom, sig) in sorted(self.rows):
                w.writerow([rom, sig, *(repr(v) for v in self.rows[(rom, sig)].as_tuple())])

    @classmethod
    def from_csv(cls, path) -> "EvalTable":
        table = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                table.add(row["rom_id"], row["signal_id"],
                          MeasureSet(*(float(row[m]) for m in MEASURES)))
        return table


def write_aggregates(aggregates: dict, path, test_set_id: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rom_id", "test_set", *MEASURES])
        for rom in sorted(aggregates):
            w.writerow([rom, test_set_id, *(repr(v) for v in aggregates[rom].as_tuple())])

