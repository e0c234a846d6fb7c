import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from twinforge.kpis import (
    KpiRecord,
    aprbs_step_stats,
    compute_kpis,
    coverage,
    crest_factor,
    read_kpi_table,
    signal_stats,
    write_kpi_table,
)
from twinforge.signals import Signal, synth_aprbs, synth_multisine

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


def aprbs_with_levels(levels):
    return Signal("x", "aprbs", np.full(281, 300.0), {"levels": list(levels), "T_start": 279.15})


def test_crest_factor_hand_values():
    assert crest_factor(np.full(10, 350.0)) == pytest.approx(1.0)
    assert crest_factor([0, 0, 0, 3]) == pytest.approx(2.0)
    assert math.sqrt(np.mean(np.array([0, 0, 0, 3.0]) ** 2)) == pytest.approx(1.5)
    t = np.linspace(0, 1, 100001)
    assert crest_factor(np.sin(2 * np.pi * 7 * t)) == pytest.approx(math.sqrt(2), rel=1e-4)


def test_crest_factor_errors():
    with pytest.raises(ValueError):
        crest_factor(np.zeros(5))
    with pytest.raises(ValueError):
        crest_factor([])


@given(arrays(float, st.integers(1, 50), elements=finite), st.floats(min_value=1e-3, max_value=1e3))
def test_crest_factor_scale_invariant(U, alpha):
    if not np.any(U):
        return
    assert crest_factor(alpha * U) == pytest.approx(crest_factor(U), rel=1e-9)
    assert crest_factor(U) >= 1.0 - 1e-12


def test_coverage_hand_values():
    assert coverage(np.full((5, 2), 0.3)) == 0.0
    assert coverage([[0.0, 0.0], [0.3, 0.4]]) == pytest.approx(50.0)
    corners = [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert coverage(corners) == pytest.approx(100.0)
    assert coverage([279.15, 473.15], [(279.15, 473.15)]) == pytest.approx(100.0)
    with pytest.raises(ValueError):
        coverage([[0.1, 0.2]])


def brute_force_coverage(Z):
    Z = np.asarray(Z, dtype=float)
    d = np.sqrt(((Z[:, None, :] - Z[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    return 100.0 * d.min(axis=1).mean()


pts = arrays(float, st.tuples(st.integers(2, 30), st.just(2)),
             elements=st.floats(min_value=0, max_value=1, allow_nan=False))


@given(pts)
def test_coverage_matches_brute_force(Z):
    assert coverage(Z) == pytest.approx(brute_force_coverage(Z), rel=1e-9, abs=1e-12)
    assert coverage(Z) >= 0


@given(pts, st.randoms())
def test_coverage_permutation_invariant(Z, rnd):
    order = list(range(len(Z)))
    rnd.shuffle(order)
    assert coverage(Z[order]) == pytest.approx(coverage(Z), rel=1e-12, abs=1e-12)


@given(pts, st.integers(0, 29))
def test_duplicate_point_never_increases_coverage(Z, i):
    Z2 = np.vstack([Z, Z[i % len(Z)]])
    assert coverage(Z2) <= coverage(Z) + 1e-9


def test_moments_are_population_statistics():
    res = SimpleNamespace(T_oven=np.array([1.0, 3.0]), T_A=np.full(2, 5.0), T_B=np.array([1.0, 3.0]))
    s = signal_stats(res)
    assert s["mean_T_oven"] == 2.0 and s["std_T_oven"] == 1.0
    assert s["std_T_A"] == 0.0


def test_step_stats_index_convention():
    stats = aprbs_step_stats(aprbs_with_levels([300, 350, 400, 450]))
    assert stats["mean_levels"] == pytest.approx(375.0)
    assert stats["mean_diff_excl_first"] == pytest.approx(50.0)
    assert stats["mean_diff_all"] == pytest.approx((450 - 279.15) / 4)
    assert stats["mean_abs_diff"] == pytest.approx((20.85 + 150) / 4)


@given(st.permutations([300.0, 340.0, 395.0, 450.0]))
def test_step_stats_reversal(levels):
    up = aprbs_step_stats(aprbs_with_levels(levels))
    down = aprbs_step_stats(aprbs_with_levels(levels[::-1]))
    assert down["mean_diff_excl_first"] == pytest.approx(-up["mean_diff_excl_first"])
    # |jumps 2..4| is symmetric; jump 1 leaves the cold start and depends on the first level
    inner = lambda s, first: 4 * s["mean_abs_diff"] - abs(first - 279.15)
    assert inner(down, levels[-1]) == pytest.approx(inner(up, levels[0]))
    assert down["mean_levels"] == pytest.approx(up["mean_levels"])


def test_step_stats_ascending_positive_and_metadata_required():
    assert aprbs_step_stats(aprbs_with_levels([300, 320, 390, 460]))["mean_diff_excl_first"] > 0
    with pytest.raises(ValueError):
        aprbs_step_stats(Signal("m", "multisine", np.ones(3), {}))


def test_step_stats_ignore_sampling():
    sig = synth_aprbs(4)
    coarse = Signal(sig.id, "aprbs", sig.values[::4], sig.meta)
    assert aprbs_step_stats(coarse) == aprbs_step_stats(sig)


def fake_result(sig):
    T_B = 279.15 + 0.4 * (sig.values - 279.15)
    return SimpleNamespace(T_oven=sig.values, T_A=0.5 * (T_B + 279.15), T_B=T_B)


def test_compute_kpis_and_table_round_trip(tmp_path):
    ap = synth_aprbs(2)
    ms = synth_multisine(2)
    recs = [compute_kpis(ap, fake_result(ap)), compute_kpis(ms, fake_result(ms))]
    assert recs[0].mean_diff_excl_first is not None
    assert recs[1].mean_levels is None and recs[1].mean_abs_diff is None
    for r in recs:
        assert r.crest_factor >= 1 and min(r.cv_u, r.cv_y, r.cv_uy) >= 0
    path = tmp_path / "kpis.csv"
    write_kpi_table(recs, path)
    assert path.read_text().splitlines()[0].split(",") == KpiRecord.columns()
    assert read_kpi_table(path) == recs
