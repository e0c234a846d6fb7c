"""Ranking of ROMs per signal kind and the beyond-horizon extrapolation study."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..signals import DT, Signal, concat_repeat
from .measures import MeasureSet, aggregate, error_measures


def _sort_key(rom_id, measures):
    rmse = measures.rmse
    return (math.inf if not np.isfinite(rmse) else rmse, rom_id)


def rank_and_best_k(aggregates: dict, kinds: dict, k: int = 5):
    """Rank ROMs by mean RMSE within each signal kind (ties by id).

    ``aggregates`` maps rom id to its mean MeasureSet on one test set and
    ``kinds`` maps rom id to the kind of its training signal. Returns
    ``(ranked, best)`` with ranked ids per kind and the mean of the best k.
    ROMs with non-finite RMSE rank last.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    by_kind: dict[str, list] = {}
    for rom_id, measures in aggregates.items():
        by_kind.setdefault(kinds[rom_id], []).append(rom_id)
    ranked, best = {}, {}
    for kind in sorted(by_kind):
        ids = sorted(by_kind[kind], key=lambda r: _sort_key(r, aggregates[r]))
        if len(ids) < k:
            raise ValueError(f"kind {kind!r} has {len(ids)} ROMs, fewer than k = {k}")
        ranked[kind] = ids
        best[kind] = aggregate(aggregates[r] for r in ids[:k])
    return ranked, best


@dataclass(frozen=True)
class ExtrapolationResult:
    in_window: MeasureSet
    out_window: MeasureSet
    window_s: float
    signal_id: str

    @property
    def degraded(self):
        """True in the typical case where error grows beyond the training window."""
        return self.out_window.rmse >= self.in_window.rmse


def split_window_measures(pred, ref, window_s: float) -> tuple[MeasureSet, MeasureSet]:
    """Measures for samples 1..n_w (t <= window) and for t > window."""
    pred = np.asarray(pred, dtype=float)
    ref = np.asarray(ref, dtype=float)
    n_w = int(round(window_s / DT))
    if len(ref) <= n_w + 1:
        raise ValueError("series does not extend beyond the window")
    return (error_measures(pred[1:n_w + 1], ref[1:n_w + 1]),
            error_measures(pred[n_w + 1:], ref[n_w + 1:]))


def extrapolation_study(model, signal: Signal, repeats: int = 2, result=None,
                        simulate=None) -> ExtrapolationResult:
    """Roll ``model`` over ``signal`` repeated ``repeats`` times.

    The FOM reference is ``result`` if given (it must belong to the repeated
    signal), else ``simulate(repeated_signal)``.
    """
    repeated = concat_repeat(signal, repeats)
    if result is None:
        if simulate is None:
            from ..fom import simulate as simulate
        result = simulate(repeated)
    ref = np.column_stack([result.T_A, result.T_B])
    if len(ref) != len(repeated.values):
        raise ValueError("reference result does not match the repeated signal")
    pred = model.rollout(repeated, ref[0])
    inside, outside = split_window_measures(pred, ref, signal.horizon)
    return ExtrapolationResult(inside, outside, signal.horizon, repeated.id)
