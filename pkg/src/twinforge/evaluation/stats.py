"""Chi-square uniformity test and Pearson correlation tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .measures import MEASURES

_EPS = 1e-15
_MAX_ITER = 500


def _gamma_p_series(a, x):
    term = 1.0 / a
    total = term
    for n in range(1, _MAX_ITER):
        term *= x / (a + n)
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a, x):
    # Modified Lentz evaluation of the continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_p_series(a, x))
    return min(1.0, _gamma_q_contfrac(a, x))


def chi2_sf(stat: float, df: int) -> float:
    """Survival function P(X >= stat) of the chi-square distribution."""
    if df < 1:
        raise ValueError("df must be >= 1")
    return gammainc_upper(0.5 * df, 0.5 * max(stat, 0.0))


@dataclass(frozen=True)
class Chi2Result:
    statistic: float
    p: float
    passed: bool
    counts: tuple
    df: int


def chi2_from_counts(counts, alpha: float = 0.05) -> Chi2Result:
    counts = np.asarray(counts, dtype=float)
    n_bins = counts.size
    if n_bins < 2:
        raise ValueError("need at least two bins")
    expected = counts.sum() / n_bins
    if expected <= 0:
        raise ValueError("no observations")
    stat = float(np.sum((counts - expected) ** 2) / expected)
    df = n_bins - 1
    p = chi2_sf(stat, df)
    return Chi2Result(stat, p, p > alpha, tuple(int(c) for c in counts), df)


def bin_counts(values, n_bins: int, value_range) -> np.ndarray:
    lo, hi = value_range
    if not hi > lo:
        raise ValueError("degenerate value range")
    counts, _ = np.histogram(np.asarray(values, dtype=float), bins=n_bins, range=(lo, hi))
    return counts


def chi2_uniformity(values, n_bins: int = 6, alpha: float = 0.05, value_range=None) -> Chi2Result:
    """Test whether ``values`` are uniform over equal-width bins.

    Bins span ``value_range`` (default: min and max of ``values``); the last
    bin is closed on the right. The statistic has n_bins - 1 degrees of freedom.
    """
    values = np.asarray(values, dtype=float)
    if values.size < n_bins:
        raise ValueError(f"need at least {n_bins} values")
    if value_range is None:
        value_range = (float(values.min()), float(values.max()))
    return chi2_from_counts(bin_counts(values, n_bins, value_range), alpha)


def pearson(x, y) -> float:
    """Pearson r over pairs where both entries are finite; NaN if undefined."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 3:
        return math.nan
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        return math.nan
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass
class CorrelationTable:
    """Pearson r with error measures as rows and KPIs as columns."""

    rows: tuple
    columns: tuple
    r: np.ndarray
    n: int

    def get(self, measure, kpi) -> float:
        return float(self.r[self.rows.index(measure), self.columns.index(kpi)])

    def undefined(self):
        return [(m, k) for i, m in enumerate(self.rows) for j, k in enumerate(self.columns)
                if not np.isfinite(self.r[i, j])]

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["measure", *self.columns])
            for i, m in enumerate(self.rows):
                w.writerow([m, *("nan" if not np.isfinite(v) else repr(float(v)) for v in self.r[i])])


def pearson_table(kpis: dict, aggregates: dict, kpi_columns, measures=MEASURES) -> CorrelationTable:
    """Correlate per-ROM KPIs with per-ROM aggregate error measures.

    ``kpis`` maps rom id to a KpiRecord (or dict); ``aggregates`` maps rom id
    to a MeasureSet. Missing KPI values and non-finite measures drop out
    pairwise; constant or too-short columns give NaN entries.
    """
    ids = sorted(set(kpis) & set(aggregates))
    if len(ids) < 3:
        raise ValueError("need at least three ROMs")

    def kpi_value(rec, name):
        v = rec.get(name) if isinstance(rec, dict) else getattr(rec, name)
        return math.nan if v is None else float(v)

    r = np.full((len(measures), len(kpi_columns)), math.nan)
    for j, k in enumerate(kpi_columns):
        x = [kpi_value(kpis[i], k) for i in ids]
        for m_i, m in enumerate(measures):
            y = [getattr(aggregates[i], m) for i in ids]
            r[m_i, j] = pearson(x, y)
    return CorrelationTable(tuple(measures), tuple(kpi_columns), r, len(ids))
