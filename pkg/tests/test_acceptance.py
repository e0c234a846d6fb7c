"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Criteria 5 to 8 are recomputed from the CSV artifacts of a fresh default
pipeline run with plain numpy, independent of the report's own checks.
"""

import csv
import json
import math
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from test_rom import decay, linear_decay_model
from test_solver import CLOSED, bumpy_state, enthalpy_audit
from twinforge.evaluation import chi2_from_counts, error_measures
from twinforge.fom import CuboidGrid, FomSolver, MaterialConstants, simulate
from twinforge.fom.materials import effective_props
from twinforge.kpis import coverage, crest_factor
from twinforge.pipeline import Context, load_config, run_pipeline
from twinforge.rom import TrainConfig, gradient_check, new_model, train
from twinforge.signals import synth_aprbs

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
FULL_LOAD = 473.15


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def full_load_run():
    start = time.perf_counter()
    res = simulate(np.full(281, FULL_LOAD))
    return res, time.perf_counter() - start


def test_criterion_01_full_load_cook(verdict, full_load_run):
    res, seconds = full_load_run
    crossed = res.times[res.T_A >= 347.15]
    t_cross = float(crossed[0]) if crossed.size else math.inf
    ok = t_cross <= 1300.0 and seconds <= 10.0
    verdict(1, "full-load cook", ok, f"T_A crosses 347.15 K at {t_cross:.0f} s (<= 1300), "
            f"runtime {seconds:.2f} s (<= 10)")


def test_criterion_02_conservation(verdict):
    start = time.perf_counter()
    solver = FomSolver(CuboidGrid(adiabatic=CLOSED))
    state = bumpy_state(solver)
    k = solver.constants
    moles0 = float(np.sum(state.c * solver.V))
    energy0 = float(np.sum(k.rho_eff * effective_props(state.mass_fraction(k), state.T, k).cp
                           * state.T * solver.V))
    dt = solver.auto_dt()
    final, drift = enthalpy_audit(solver, state, FULL_LOAD, int(round(1400 / dt)), dt)
    mole_err = abs(float(np.sum(final.c * solver.V)) - moles0) / moles0
    energy_err = abs(drift) / energy0

    ks = MaterialConstants(h_amb_bottom=44.0)
    sym = FomSolver(CuboidGrid(), ks)
    st = sym.initial_state()
    y = np.linspace(-1, 1, sym.grid.shape[1])[None, :, None]
    st.T = st.T + 10.0 * y ** 2 + np.zeros(sym.grid.shape)
    dts = sym.auto_dt()
    for _ in range(int(round(1400 / dts))):
        st = sym.step(st, 450.0, dts)
    sym_err = max(float(np.max(np.abs(st.T - st.T[:, ::-1, :]))),
                  float(np.max(np.abs(st.c - st.c[:, ::-1, :]))) / ks.c0)
    seconds = time.perf_counter() - start
    ok = mole_err < 1e-9 and energy_err < 1e-6 and sym_err < 1e-10 and seconds <= 10.0
    verdict(2, "conservation", ok, f"moles {mole_err:.1e} (< 1e-9), energy {energy_err:.1e} "
            f"(< 1e-6), symmetry {sym_err:.1e} (< 1e-10), runtime {seconds:.2f} s (<= 10)")


def test_criterion_03_boiling_plateau(verdict, full_load_run):
    res, _ = full_load_run
    wet = res.C_B > 0.3
    peak = float(res.T_B[wet].max()) if wet.any() else math.nan
    ok = wet.sum() > 1 and peak <= 380.0
    verdict(3, "boiling plateau", ok, f"max T_B while C > 0.3 is {peak:.2f} K (<= 380) "
            f"over {int(wet.sum())} samples")


def test_criterion_04_rom_machinery(verdict):
    start = time.perf_counter()
    errors = []
    for dt in (5.0, 2.5, 1.25):
        n = int(round(100.0 / dt))
        errors.append(abs(decay(linear_decay_model(0.05 * dt), n)[-1] - math.exp(-5.0)))
    ratios = [a / b for a, b in zip(errors, errors[1:])]

    sig = synth_aprbs(5)
    res = simulate(sig, grid=CuboidGrid(nx=6, ny=4, nz=4))
    grad_err = gradient_check(new_model(TrainConfig(seed=2, output_scale=1.0)), (sig, res),
                              eps=1e-5, n_check=60)

    teacher, _ = train([(sig, res)], TrainConfig(epochs=300, lr=1e-2, seed=3))
    Y = teacher.rollout(sig, [res.T_A[0], res.T_B[0]])
    target = SimpleNamespace(T_A=Y[:, 0], T_B=Y[:, 1])
    cfg = TrainConfig(epochs=20000, lr=3e-3, lr_schedule="cosine", lr_final=1e-5, seed=11)
    _, report = train([(sig, target)], cfg)
    recovery = report.train_rmse[sig.id]
    seconds = time.perf_counter() - start

    ok = (all(12.8 <= r <= 19.2 for r in ratios) and grad_err < 1e-4 and recovery < 0.05
          and seconds <= 120.0)
    verdict(4, "ROM machinery", ok, f"RK4 ratios {', '.join(f'{r:.2f}' for r in ratios)} "
            f"(16 +- 20%), gradient error {grad_err:.1e} (< 1e-4), recovery {recovery:.4f} K "
            f"(< 0.05), runtime {seconds:.0f} s (<= 120)")


# ---------------------------------------------------------------- pipeline criteria

@pytest.fixture(scope="module")
def study(tmp_path_factory):
    """Fresh default pipeline run; artifacts read back as plain tables."""
    ws = tmp_path_factory.mktemp("default-study")
    config = load_config(CONFIGS / "default.ini").with_workspace(ws)
    start = time.perf_counter()
    run_pipeline(Context.open(config), figures=False)
    seconds = time.perf_counter() - start
    aggs = {}
    for r in rows(ws / "eval" / "aggregates.csv"):
        aggs.setdefault(r["test_set"], {})[r["rom_id"]] = {k: float(v) for k, v in r.items()
                                                           if k not in ("rom_id", "test_set")}
    sets = json.loads((ws / "eval" / "testsets.json").read_text())
    kinds = {r["signal_id"]: r["kind"] for r in rows(ws / "signals" / "bank.csv")}
    models = {p.stem for p in (ws / "models").glob("*.json")}
    kpis = {r["signal_id"]: r for r in rows(ws / "report" / "kpis.csv")}
    ap_set = next(name for name, s in sets.items() if s["kind"] == "aprbs")
    test_ids = {i for s in sets.values() for i in s["ids"]}
    ap_roms = sorted(r for r, k in kinds.items() if k == "aprbs" and r in models)
    assert not test_ids & set(ap_roms)
    return SimpleNamespace(config=config, seconds=seconds, aggs=aggs, sets=sets, kinds=kinds,
                           kpis=kpis, ap_set=ap_set, ap_roms=ap_roms)


def best_by_kind(study, test_set, kind):
    table = study.aggs[test_set]
    roms = [r for r, k in study.kinds.items() if k == kind and r in table]
    return sorted(roms, key=lambda r: table[r]["rmse"])


def test_criterion_05_headline_rom(verdict, study):
    ap = study.sets[study.ap_set]
    head = max(study.ap_roms, key=lambda r: float(study.kpis[r]["std_T_B"]))
    m = study.aggs[study.ap_set][head]
    ok = (len(ap["ids"]) == 15 and ap["passed"] and m["rmse"] <= 2.5 and m["mape"] <= 1.0
          and study.seconds <= 1800.0)
    verdict(5, "headline ROM quality", ok, f"{head} on {study.ap_set} (chi2 p = {ap['p']:.3f}): "
            f"RMSE {m['rmse']:.3f} K (<= 2.5), MAPE {m['mape']:.3f} % (<= 1), "
            f"pipeline {study.seconds / 60:.1f} min for {len(study.kinds)} signals (<= 30)")


def test_criterion_06_kpi_correlation(verdict, study):
    table = study.aggs[study.ap_set]
    roms = [r for r in study.ap_roms if r in table]
    rmse = np.array([table[r]["rmse"] for r in roms])
    std_b = np.array([float(study.kpis[r]["std_T_B"]) for r in roms])
    diff = np.array([float(study.kpis[r]["mean_diff_excl_first"]) for r in roms])
    r_std = float(np.corrcoef(std_b, rmse)[0, 1])
    r_diff = float(np.corrcoef(diff, rmse)[0, 1])
    ok = len(roms) >= 30 and r_std < -0.3 and r_diff < -0.2
    verdict(6, "KPI correlation", ok, f"{len(roms)} APRBS ROMs (>= 30), r(STD(T_B), RMSE) = "
            f"{r_std:.3f} (< -0.3), r(mean step difference, RMSE) = {r_diff:.3f} (< -0.2)")


def test_criterion_07_signal_type_ordering(verdict, study):
    table = study.aggs["MIXED"]
    k = study.config.evaluation.best_k
    ap = best_by_kind(study, "MIXED", "aprbs")
    ms = best_by_kind(study, "MIXED", "multisine")
    ap_k = float(np.mean([table[r]["rmse"] for r in ap[:k]]))
    ms_k = float(np.mean([table[r]["rmse"] for r in ms[:k]]))
    step = table["step"]["rmse"]
    best = table[ap[0]]["rmse"]
    ok = len(ap) >= k and len(ms) >= k and ap_k <= ms_k and step >= 5.0 * best
    verdict(7, "signal-type ordering", ok, f"best-{k} APRBS {ap_k:.3f} K <= best-{k} multi-sine "
            f"{ms_k:.3f} K; step {step:.3f} K >= 5 x best APRBS {best:.3f} K")


def test_criterion_08_sinaprbs_degradation(verdict, study):
    table = study.aggs["MIXED"]
    base = best_by_kind(study, "MIXED", "aprbs")[:study.config.evaluation.sin_k]
    means = {}
    for group, suffix in (("aprbs", ""), ("fast", "f"), ("slow", "s")):
        vals = [table[r + suffix]["rmse"] for r in base if r + suffix in table]
        means[group] = float(np.mean(vals)) if len(vals) == len(base) else math.nan
    ok = means["aprbs"] <= means["fast"] <= means["slow"]
    verdict(8, "sinAPRBS degradation", ok, f"best-{len(base)} APRBS {means['aprbs']:.3f} K <= "
            f"fast {means['fast']:.3f} K <= slow {means['slow']:.3f} K")


# ---------------------------------------------------------------- standalone criteria

def test_criterion_09_speed_up(verdict, full_load_run):
    _, fom_seconds = full_load_run
    model = new_model(TrainConfig(seed=1, output_scale=0.05))
    sig = synth_aprbs(4)
    assert len(sig.values) == 281
    model.rollout(sig, [279.15, 279.15])  # compile
    times = []
    for _ in range(21):
        start = time.perf_counter()
        model.rollout(sig, [279.15, 279.15])
        times.append(time.perf_counter() - start)
    rom_seconds = float(np.median(times))
    speed_up = fom_seconds / rom_seconds
    ok = rom_seconds < 0.010 and fom_seconds < 10.0 and speed_up >= 1e3
    verdict(9, "speed-up", ok, f"280-step rollout {rom_seconds * 1e3:.3f} ms (< 10), FOM "
            f"{fom_seconds:.2f} s (< 10), speed-up {speed_up:.1e} (>= 1e3)")


def test_criterion_10_statistics_oracles(verdict):
    res = chi2_from_counts([3, 2, 3, 2, 3, 2])
    cr_const = crest_factor(np.full(10, 350.0))
    cr_spike = crest_factor([0, 0, 0, 3])
    cv_same = coverage(np.full((5, 2), 0.3))
    cv_pair = coverage([[0.0, 0.0], [0.3, 0.4]])
    cv_corners = coverage([[0, 0], [0, 1], [1, 0], [1, 1]])
    ref = np.linspace(300, 360, 50)
    ident = error_measures(ref, ref).as_tuple()
    off = error_measures(ref + 2.0, ref)
    ok = (abs(res.statistic - 0.6) < 1e-12 and abs(res.p - 0.988) < 5e-4 and res.df == 5
          and abs(cr_const - 1.0) < 1e-12 and abs(cr_spike - 2.0) < 1e-12
          and cv_same == 0.0 and abs(cv_pair - 50.0) < 1e-9 and abs(cv_corners - 100.0) < 1e-9
          and ident == (0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
          and abs(off.rmse - 2.0) < 1e-12 and abs(off.max - 2.0) < 1e-12
          and abs(off.median - 2.0) < 1e-12 and abs(off.iqr) < 1e-12)
    verdict(10, "statistics oracles", ok, f"chi2 {res.statistic:.3f} p {res.p:.4f}; crest "
            f"{cr_const:.3f}/{cr_spike:.3f}; Cv {cv_same:.1f}/{cv_pair:.1f}/{cv_corners:.1f}; "
            f"offset RMSE {off.rmse:.3f}")


def test_criterion_11_reproducibility(verdict, tmp_path):
    config = load_config(CONFIGS / "small.ini")
    trees = []
    for name in ("first", "second"):
        ws = tmp_path / name
        run_pipeline(Context.open(config.with_workspace(ws)), figures=False)
        trees.append({p.relative_to(ws).as_posix(): p.read_bytes() for p in ws.rglob("*.csv")})
    a, b = trees
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    ok = len(a) > 0 and not differing
    verdict(11, "reproducibility", ok, f"{len(a)} CSV files compared, "
            f"{len(differing)} differ{': ' + ', '.join(differing[:5]) if differing else ''}")
