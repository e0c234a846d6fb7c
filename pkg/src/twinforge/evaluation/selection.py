"""Randomized search for a test set whose MEDIAN(T_B) values look uniform."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import Xoshiro256
from .stats import Chi2Result, chi2_uniformity


@dataclass(frozen=True)
class FairSubset:
    ids: tuple
    chi2: Chi2Result
    tries: int
    value_range: tuple


def _stratified(rng, members_by_bin, size):
    """Round-robin over bins in random order, one random unused member per visit."""
    pools = [list(m) for m in members_by_bin]
    chosen = []
    while len(chosen) < size:
        order = rng.permutation([b for b, p in enumerate(pools) if p])
        for b in order:
            if len(chosen) == size:
                break
            chosen.append(pools[b].pop(rng.randbelow(len(pools[b]))))
    return chosen


def select_fair_subset(pool: dict, size: int = 15, seed: int = 0, exclude=(), n_bins: int = 6,
                       alpha: float = 0.05, max_tries: int = 2000) -> FairSubset:
    """Pick ``size`` ids from ``pool`` (id -> MEDIAN(T_B)) that pass the chi2 test.

    Proposals alternate between plain random subsets and bin-stratified ones;
    the first passing proposal wins, otherwise the highest-p proposal seen.
    Bins span the min/max of the eligible pool, i.e. after ``exclude``.
    """
    excluded = set(exclude)
    ids = sorted(i for i in pool if i not in excluded)
    if len(ids) < size:
        raise ValueError(f"pool of {len(ids)} eligible signals is smaller than {size}")
    if size < n_bins:
        raise ValueError("subset size must be at least the number of bins")
    values = np.array([float(pool[i]) for i in ids])
    value_range = (float(values.min()), float(values.max()))
    edges = np.linspace(*value_range, n_bins + 1)
    bin_of = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, n_bins - 1)
    members_by_bin = [[k for k in range(len(ids)) if bin_of[k] == b] for b in range(n_bins)]

    rng = Xoshiro256(seed)
    best = None
    for t in range(1, max_tries + 1):
        if t % 2:
            picks = rng.sample(range(len(ids)), size)
        else:
            picks = _stratified(rng, members_by_bin, size)
        res = chi2_uniformity(values[picks], n_bins, alpha, value_range)
        if best is None or res.p > best[1].p:
            best = (picks, res)
        if res.passed:
            break
    picks, res = best
    chosen = tuple(sorted(ids[k] for k in picks))
    return FairSubset(chosen, res, t, value_range)
