"""Signal KPIs used to predict how well a 1-signal ROM will generalize."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .signals import T_COLD, Signal

U_RANGE = (279.15, 473.15)
Y_RANGE = (279.15, 380.0)


@dataclass
class KpiRecord:
    signal_id: str
    kind: str
    crest_factor: float
    cv_u: float
    cv_y: float
    cv_uy: float
    mean_T_oven: float
    std_T_oven: float
    mean_T_A: float
    std_T_A: float
    mean_T_B: float
    std_T_B: float
    mean_levels: float | None = None
    mean_diff_all: float | None = None
    mean_diff_excl_first: float | None = None
    mean_abs_diff: float | None = None

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def as_dict(self):
        return asdict(self)


# KPI columns used for correlation tables, in display order
KPI_COLUMNS = (
    "mean_levels", "mean_diff_all", "mean_diff_excl_first", "mean_abs_diff",
    "mean_T_oven", "std_T_oven", "crest_factor", "cv_u", "cv_y", "cv_uy",
    "std_T_A", "std_T_B",
)


def crest_factor(U) -> float:
    U = np.asarray(U, dtype=float)
    if U.size == 0:
        raise ValueError("empty series")
    peak = float(np.max(np.abs(U)))
    if peak == 0.0:
        raise ValueError("crest factor undefined for an all-zero series")
    # normalize by the peak first so tiny or huge amplitudes cannot under/overflow
    V = U / peak
    return 1.0 / math.sqrt(float(np.mean(V * V)))


def normalize(values, bounds):
    lo, hi = bounds
    return (np.asarray(values, dtype=float) - lo) / (hi - lo)


def coverage(Z, bounds=None) -> float:
    """Mean nearest-neighbour distance of a point set, times 100.

    ``Z`` is (N,) or (N, d). ``bounds`` is one (lo, hi) pair per column used
    to map the operating range onto [0, 1]; ``None`` means already normalized.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if len(Z) < 2:
        raise ValueError("coverage needs at least two points")
    if not np.all(np.isfinite(Z)):
        raise ValueError("non-finite points")
    if bounds is not None:
        Z = np.column_stack([normalize(Z[:, j], b) for j, b in enumerate(bounds)])
    dist, _ = cKDTree(Z).query(Z, k=2)
    return 100.0 * float(np.mean(dist[:, 1]))


def signal_stats(result) -> dict:
    """Population means and standard deviations of T_oven, T_A, T_B."""
    out = {}
    for name in ("T_oven", "T_A", "T_B"):
        x = np.asarray(getattr(result, name), dtype=float)
        out[f"mean_{name}"] = float(np.mean(x))
        out[f"std_{name}"] = float(np.std(x))
    return out


def aprbs_step_stats(signal: Signal) -> dict:
    """Level statistics from the APRBS metadata.

    Jump 1 runs from the cold start value to the first level; jumps 2..4 link
    consecutive levels. ``mean_diff_excl_first`` averages jumps 2..4.
    """
    meta = signal.meta or {}
    if signal.kind not in ("aprbs", "sinaprbs") or "levels" not in meta:
        raise ValueError(f"signal {signal.id} carries no APRBS level metadata")
    levels = np.asarray(meta["levels"], dtype=float)
    start = float(meta.get("T_start", T_COLD))
    diffs = np.diff(np.concatenate([[start], levels]))
    return {
        "mean_levels": float(np.mean(levels)),
        "mean_diff_all": float(np.mean(diffs)),
        "mean_diff_excl_first": float(np.mean(diffs[1:])),
        "mean_abs_diff": float(np.mean(np.abs(diffs))),
    }


def compute_kpis(signal: Signal, result) -> KpiRecord:
    stats = signal_stats(result)
    U = np.asarray(result.T_oven, dtype=float)
    Y = np.asarray(result.T_B, dtype=float)
    rec = KpiRecord(
        signal_id=signal.id, kind=signal.kind,
        crest_factor=crest_factor(U),
        cv_u=coverage(U, [U_RANGE]),
        cv_y=coverage(Y, [Y_RANGE]),
        cv_uy=coverage(np.column_stack([U, Y]), [U_RANGE, Y_RANGE]),
        **stats,
    )
    if signal.kind in ("aprbs", "sinaprbs") and "levels" in signal.meta:
        for key, value in aprbs_step_stats(signal).items():
            setattr(rec, key, value)
    return rec


def write_kpi_table(records, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = KpiRecord.columns()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for rec in records:
            d = rec.as_dict()
            w.writerow(["" if d[c] is None else (repr(d[c]) if isinstance(d[c], float) else d[c])
                        for c in cols])


def read_kpi_table(path) -> list[KpiRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kwargs = {}
            for f in fields(KpiRecord):
                v = row[f.name]
                if f.name in ("signal_id", "kind"):
                    kwargs[f.name] = v
                else:
                    kwargs[f.name] = None if v == "" else float(v)
            out.append(KpiRecord(**kwargs))
    return out
