import math
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from twinforge.evaluation import (
    EvalTable,
    MeasureSet,
    aggregate,
    chi2_from_counts,
    chi2_uniformity,
    error_measures,
    extrapolation_study,
    pearson,
    pearson_table,
    rank_and_best_k,
    select_fair_subset,
    split_window_measures,
)
from twinforge.evaluation.measures import quartiles
from twinforge.evaluation.stats import gammainc_upper
from twinforge.rng import Xoshiro256
from twinforge.signals import synth_aprbs

temps = arrays(float, st.integers(2, 60), elements=st.floats(min_value=280, max_value=480))
offsets = st.floats(min_value=-20, max_value=20, allow_nan=False)


def ms(rmse, **kw):
    base = dict(mape=0.0, max=rmse, median=0.0, iqr=0.0, r2=0.9)
    base.update(kw)
    return MeasureSet(rmse=rmse, **base)


# error measures

def test_identity_measures():
    ref = np.linspace(300, 360, 50)
    assert error_measures(ref, ref).as_tuple() == (0.0, 0.0, 0.0, 0.0, 0.0, 1.0)


def test_constant_offset_measures():
    ref = np.linspace(300, 360, 50)
    m = error_measures(ref + 2.0, ref)
    assert m.rmse == pytest.approx(2.0) and m.max == pytest.approx(2.0)
    assert m.median == pytest.approx(2.0) and m.iqr == pytest.approx(0.0, abs=1e-12)
    assert m.mape == pytest.approx(100 * np.mean(2.0 / ref))


def test_quartiles_linear_interpolation():
    assert quartiles([4, 1, 3, 2]) == (1.75, 3.25)
    x = np.random.default_rng(0).normal(size=37)
    assert quartiles(x) == pytest.approx(tuple(np.quantile(x, [0.25, 0.75])))


def test_measures_hand_example():
    ref = np.array([300.0, 310.0, 320.0, 330.0])
    pred = ref + np.array([1.0, -2.0, 3.0, 0.0])
    m = error_measures(pred, ref)
    assert m.rmse == pytest.approx(math.sqrt(14 / 4))
    assert m.max == 3.0 and m.median == 0.5
    assert m.iqr == pytest.approx(1.5 - (-0.5))
    assert m.r2 == pytest.approx(1 - 14 / 500)


def test_measure_errors():
    with pytest.raises(ValueError):
        error_measures([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        error_measures([300.0, 301.0], [300.0, 300.0])
    with pytest.raises(ValueError):
        error_measures([1.0, 2.0], [0.0, 2.0])
    with pytest.raises(ValueError):
        error_measures([1.0], [1.0])


@given(temps, st.data())
def test_measure_invariants(ref, data):
    assume(np.ptp(ref) > 1e-3)
    noise = data.draw(arrays(float, ref.shape, elements=st.floats(-5, 5)))
    m = error_measures(ref + noise, ref)
    assert m.rmse >= 0 and m.max >= 0 and m.iqr >= 0 and m.mape >= 0
    assert m.r2 <= 1.0 and abs(m.median) <= m.max + 1e-12


@given(temps, st.data(), offsets)
def test_translation_consistency(ref, data, c):
    assume(np.ptp(ref) > 1e-2)
    noise = data.draw(arrays(float, ref.shape, elements=st.floats(-5, 5)))
    a = error_measures(ref + noise, ref).as_dict()
    b = error_measures(ref + noise + c, ref + c).as_dict()
    for name in ("rmse", "max", "median", "iqr", "r2"):
        assert b[name] == pytest.approx(a[name], rel=1e-6, abs=1e-6)


# aggregation

def test_aggregate_examples():
    row = ms(1.5, mape=0.3)
    assert aggregate([row]) == row
    assert aggregate([ms(1.0), ms(3.0)]).rmse == 2.0
    with pytest.raises(ValueError):
        aggregate([])


@given(st.lists(st.floats(0, 10), min_size=1, max_size=12), st.randoms())
def test_aggregate_permutation_invariant(values, rnd):
    rows = [ms(v) for v in values]
    shuffled = rows[:]
    rnd.shuffle(shuffled)
    assert aggregate(shuffled).rmse == pytest.approx(aggregate(rows).rmse, rel=1e-12)


def test_eval_table_aggregate_and_csv(tmp_path):
    table = EvalTable()
    for i, sig in enumerate(["t1", "t2", "t3"]):
        table.add("ap1", sig, ms(1.0 + i, mape=0.1 * i))
    table.add("ap2", "t1", ms(5.0))
    agg = table.aggregate("ap1", ["t1", "t2", "t3"])
    assert agg.rmse == 2.0 and agg.mape == pytest.approx(0.1)
    with pytest.raises(KeyError):
        table.aggregate("ap2", ["t1", "t2"])
    table.to_csv(tmp_path / "t.csv")
    back = EvalTable.from_csv(tmp_path / "t.csv")
    assert back.rows == table.rows
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "rom_id,signal_id,rmse,mape,max,median,iqr,r2"


# chi-square

def test_chi2_hand_example():
    res = chi2_from_counts([3, 2, 3, 2, 3, 2])
    assert res.statistic == pytest.approx(0.6)
    assert res.df == 5
    assert res.p == pytest.approx(0.988, abs=5e-4)
    assert res.p == pytest.approx(scipy.stats.chi2.sf(0.6, 5), rel=1e-10)
    assert res.passed


def test_chi2_all_in_one_bin():
    res = chi2_from_counts([15, 0, 0, 0, 0, 0])
    assert res.statistic == pytest.approx(75.0) and not res.passed


def test_chi2_equal_counts():
    res = chi2_uniformity(np.repeat(np.arange(6) + 0.5, 3))
    assert res.statistic == 0.0 and res.p == pytest.approx(1.0)


def test_chi2_errors():
    with pytest.raises(ValueError):
        chi2_uniformity([1.0] * 10)
    with pytest.raises(ValueError):
        chi2_uniformity([1.0, 2.0, 3.0])


@given(arrays(float, st.integers(6, 40), elements=st.floats(300, 380)), st.randoms())
def test_chi2_permutation_invariant(values, rnd):
    assume(np.ptp(values) > 1e-6)
    perm = list(values)
    rnd.shuffle(perm)
    assert chi2_uniformity(perm).statistic == pytest.approx(chi2_uniformity(values).statistic)


@given(st.floats(0.1, 50), st.floats(0, 200))
@settings(max_examples=200)
def test_incomplete_gamma_matches_reference(a, x):
    assert gammainc_upper(a, x) == pytest.approx(scipy.special.gammaincc(a, x), rel=1e-9, abs=1e-13)


# correlation

def test_pearson_matches_reference():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=40), rng.normal(size=40)
    y = y + 0.5 * x
    assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], rel=1e-12)
    assert pearson(x, 3 * x + 1) == pytest.approx(1.0)
    assert pearson(x, -2 * x) == pytest.approx(-1.0)


def test_pearson_undefined():
    assert math.isnan(pearson([1, 2, 3], [5, 5, 5]))
    assert math.isnan(pearson([1, 2], [3, 4]))
    assert pearson([1, 2, np.nan, 4], [1, 2, 7, 4]) == pytest.approx(1.0)


def test_independent_columns_correlate_weakly():
    gen = Xoshiro256(2024)
    x = [gen.random() for _ in range(100)]
    y = [gen.random() for _ in range(100)]
    assert abs(pearson(x, y)) < 0.3


@given(arrays(float, 12, elements=st.floats(-100, 100)), arrays(float, 12, elements=st.floats(-100, 100)),
       st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_affine_and_sign(x, y, a, b):
    r = pearson(x, y)
    assume(np.isfinite(r) and np.std(x) > 1e-3 and np.std(y) > 1e-3)
    assert pearson(a * x + b, y) == pytest.approx(r, abs=1e-9)
    assert pearson(-x, y) == pytest.approx(-r, abs=1e-12)


def test_pearson_table_layout_and_flags():
    kpis = {f"r{i}": {"std_T_B": float(i), "flat": 1.0} for i in range(6)}
    aggs = {f"r{i}": ms(10.0 - i, mape=0.1 * i) for i in range(6)}
    table = pearson_table(kpis, aggs, ["std_T_B", "flat"])
    assert table.rows == ("rmse", "mape", "max", "median", "iqr", "r2")
    assert table.get("rmse", "std_T_B") == pytest.approx(-1.0)
    assert table.get("mape", "std_T_B") == pytest.approx(1.0)
    assert ("rmse", "flat") in table.undefined()
    with pytest.raises(ValueError):
        pearson_table({"a": {}}, {"a": ms(1)}, ["x"])


# fair test sets

def test_uniform_pool_passes():
    pool = {f"s{i:02d}": 300.0 + 2.0 * i for i in range(40)}
    res = select_fair_subset(pool, size=15, seed=1)
    assert res.chi2.passed and len(res.ids) == 15 and set(res.ids) <= set(pool)


def test_clustered_pool_passes_and_is_reproducible():
    gen = np.random.default_rng(5)
    pool = {f"s{i}": float(v) for i, v in enumerate(gen.normal(340, 8, size=100))}
    a = select_fair_subset(pool, size=15, seed=7)
    b = select_fair_subset(pool, size=15, seed=7)
    assert a == b
    assert a.chi2.passed
    vals = [pool[i] for i in a.ids]
    assert chi2_uniformity(vals, 6, 0.05, a.value_range).p == pytest.approx(a.chi2.p)


def test_exclusion_and_pool_size():
    pool = {f"s{i}": float(i) for i in range(20)}
    res = select_fair_subset(pool, size=12, seed=0, exclude=["s3", "s4"])
    assert not {"s3", "s4"} & set(res.ids)
    with pytest.raises(ValueError):
        select_fair_subset(pool, size=19, exclude=["s1", "s2"])


# ranking

def test_rank_and_best_k():
    aggs = {"a1": ms(3.0), "a2": ms(1.0), "a3": ms(2.0), "a4": ms(1.0), "a5": ms(float("nan")),
            "m1": ms(4.0), "m2": ms(5.0)}
    kinds = {k: ("aprbs" if k[0] == "a" else "multisine") for k in aggs}
    ranked, best = rank_and_best_k(aggs, kinds, k=1)
    assert ranked["aprbs"] == ["a2", "a4", "a3", "a1", "a5"]
    assert best["aprbs"].rmse == 1.0 and best["multisine"].rmse == 4.0
    ranked, best = rank_and_best_k(aggs, kinds, k=2)
    assert best["multisine"].rmse == 4.5
    with pytest.raises(ValueError):
        rank_and_best_k(aggs, kinds, k=3)


# extrapolation

def test_split_window_measures():
    ref = np.column_stack([np.linspace(300, 360, 561), np.linspace(310, 380, 561)])
    pred = ref.copy()
    pred[1:281] += 1.0
    pred[281:] += 3.0
    inside, outside = split_window_measures(pred, ref, 1400.0)
    assert inside.rmse == pytest.approx(1.0) and outside.rmse == pytest.approx(3.0)


def test_extrapolation_study_with_reference():
    sig = synth_aprbs(1)
    n = 2 * (len(sig.values) - 1) + 1
    ref = SimpleNamespace(T_A=np.linspace(279.15, 350, n), T_B=np.linspace(279.15, 370, n))

    class Offset:
        def rollout(self, signal, X0):
            Y = np.column_stack([ref.T_A, ref.T_B])
            return Y + np.where(np.arange(len(Y)) > 280, 2.0, 0.5)[:, None]

    res = extrapolation_study(Offset(), sig, repeats=2, result=ref)
    assert res.window_s == 1400.0 and res.signal_id == f"{sig.id}x2"
    assert res.in_window.rmse == pytest.approx(0.5) and res.out_window.rmse == pytest.approx(2.0)
    assert res.degraded
    with pytest.raises(ValueError):
        extrapolation_study(Offset(), sig, repeats=1, result=ref)
