"""Pipeline stages. Each stage reads and writes workspace artifacts only."""

from __future__ import annotations

import csv
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import (LeakageError, MissingArtifactError, RolloutDivergedError, SolverError,
                      TrainingDivergedError)
from ..evaluation import (MEASURES, EvalTable, MeasureSet, error_measures, extrapolation_study,
                          pearson_table, rank_and_best_k, select_fair_subset, write_aggregates)
from ..fom import FomSolver
from ..kpis import KPI_COLUMNS, compute_kpis, write_kpi_table
from ..rng import derive_seed
from ..rom import load_model, save_model, train
from ..signals import (T_HIGH, aprbs_to_sinaprbs, concat_repeat, synth_aprbs, synth_basic,
                       synth_multisine)
from .config import ExperimentConfig
from .workspace import Workspace, read_json, sim_key, write_json

# test-set pools: name prefix and the signal kind drawn from
TEST_POOLS = (("AP", "aprbs"), ("SIN", "sinaprbs"), ("MS", "multisine"))
MIXED = "MIXED"
NAN_MEASURES = MeasureSet(*([math.nan] * len(MEASURES)))


def natural_key(sid: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", sid)]


def natural_sorted(ids):
    return sorted(ids, key=natural_key)


def fmt(v):
    if v is None:
        return ""
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_rows(path):
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError(f"missing artifact: {path}")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class Context:
    config: ExperimentConfig
    ws: Workspace

    @classmethod
    def open(cls, config: ExperimentConfig):
        return cls(config, Workspace(config.workspace).create())

    @property
    def log(self):
        return self.ws.logger()

    def map(self, fn, items):
        items = list(items)
        if self.config.jobs <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ProcessPoolExecutor(max_workers=min(self.config.jobs, len(items))) as pool:
            return list(pool.map(fn, items))


# ---------------------------------------------------------------- synth

def bank_signals(config: ExperimentConfig):
    """All bank signals, deterministic in ``config.seed`` and the bank counts."""
    b, seed, H = config.bank, config.seed, config.bank.horizon
    out = []
    for i in range(b.aprbs):
        out.append(synth_aprbs(derive_seed(seed, "aprbs", i), horizon=H, signal_id=f"ap{i}"))
    for i in range(b.sinaprbs):
        parent = synth_aprbs(derive_seed(seed, "sinaprbs-parent", i), horizon=H, signal_id=f"sinp{i}")
        out.append(aprbs_to_sinaprbs(parent, None, seed=derive_seed(seed, "sinaprbs", i),
                                     signal_id=f"sin{i}"))
    for i in range(b.multisine):
        out.append(synth_multisine(derive_seed(seed, "multisine", i), horizon=H, signal_id=f"ms{i}"))
    for i in range(b.schroeder):
        out.append(synth_multisine(derive_seed(seed, "schroeder", i), schroeder=True, horizon=H,
                                   signal_id=f"sms{i}"))
    step_levels = [423.15] if b.step == 1 else np.linspace(373.15, T_HIGH, b.step)
    for i, level in enumerate(step_levels[:b.step]):
        out.append(synth_basic("step", H, level=float(level), t_step=50.0,
                               signal_id="step" if b.step == 1 else f"step{i}"))
    sine_freqs = [0.001] if b.sine == 1 else np.linspace(0.001, 0.005, b.sine)
    for i, f in enumerate(sine_freqs[:b.sine]):
        out.append(synth_basic("sine", H, amplitude=97.0, frequency=float(f), offset=376.15,
                               signal_id="sine" if b.sine == 1 else f"sine{i}"))
    return out


def synth(ctx: Context):
    signals = bank_signals(ctx.config)
    for s in signals:
        s.to_files(ctx.ws.signals)
    write_rows(ctx.ws.signals / "bank.csv", ["signal_id", "kind", "seed"],
               [[s.id, s.kind, "" if s.meta.get("seed") is None else s.meta["seed"]] for s in signals])
    ctx.log.info("synth: %d signals", len(signals))
    return [s.id for s in signals]


def bank(ctx: Context) -> dict:
    """signal id -> kind for the synthesized bank."""
    return {r["signal_id"]: r["kind"] for r in read_rows(ctx.ws.signals / "bank.csv")}


# ---------------------------------------------------------------- simulate

def _simulate_job(args):
    root, sid, key, grid, constants = args
    ws = Workspace(root)
    signal = ws.load_signal(sid)
    try:
        result = FomSolver(grid, constants).run(signal.values, signal_id=sid)
    except SolverError as exc:
        return sid, key, f"failed: {exc}"
    tmp = ws.cache_path(key).with_suffix(".tmp")
    result.to_csv(tmp)
    tmp.replace(ws.cache_path(key))
    return sid, key, "ok"


def simulate(ctx: Context, ids=None):
    """Run the FOM for the given signals (default: all), reusing cached results."""
    cfg = ctx.config
    ids = natural_sorted(ids if ids is not None else ctx.ws.signal_ids())
    index = ctx.ws.sim_index()
    jobs, hits = [], 0
    for sid in ids:
        signal = ctx.ws.load_signal(sid)
        key = sim_key(signal.values, cfg.grid, cfg.constants)
        entry = index.get(sid)
        if entry and entry["key"] == key and entry["status"] == "ok" and ctx.ws.cache_path(key).is_file():
            hits += 1
            continue
        if ctx.ws.cache_path(key).is_file():
            index[sid] = {"key": key, "status": "ok"}
            hits += 1
            continue
        jobs.append((str(ctx.ws.root), sid, key, cfg.grid, cfg.constants))
    results = ctx.map(_simulate_job, jobs)
    failed = []
    for sid, key, status in results:
        index[sid] = {"key": key, "status": status}
        if status != "ok":
            failed.append(sid)
            ctx.log.warning("simulate %s: %s", sid, status)
    ctx.ws.write_sim_index(index)
    ctx.log.info("simulate: %d cached, %d computed, %d failed", hits, len(results), len(failed))
    return {"hits": hits, "computed": len(results), "failed": failed}


def simulated_ok(ctx: Context) -> set:
    return {sid for sid, e in ctx.ws.sim_index().items() if e["status"] == "ok"}


# ---------------------------------------------------------------- test sets

def testset(ctx: Context):
    """Chi-square-selected test sets per pool plus their union."""
    cfg, ev = ctx.config, ctx.config.evaluation
    kinds = bank(ctx)
    ok = simulated_ok(ctx)
    doc, rows, mixed = {}, [], []
    for prefix, kind in TEST_POOLS:
        members = [s for s in natural_sorted(kinds) if kinds[s] == kind and s in ok]
        if not members:
            continue
        pool = {s: float(np.median(ctx.ws.load_result(s).T_B)) for s in members}
        fair = select_fair_subset(pool, ev.test_size, derive_seed(cfg.seed, "testset", kind),
                                  n_bins=ev.n_bins, alpha=ev.alpha, max_tries=ev.max_tries)
        name = f"{prefix}{ev.test_size}"
        ids = natural_sorted(fair.ids)
        doc[name] = {"kind": kind, "ids": ids, "statistic": fair.chi2.statistic, "p": fair.chi2.p,
                     "passed": fair.chi2.passed, "counts": list(fair.chi2.counts),
                     "tries": fair.tries, "range": list(fair.value_range)}
        rows += [[name, s, pool[s]] for s in ids]
        mixed += ids
        ctx.log.info("testset %s: chi2 %.3f p %.3f after %d tries", name, fair.chi2.statistic,
                     fair.chi2.p, fair.tries)
    doc[MIXED] = {"kind": "mixed", "ids": mixed}
    write_json(ctx.ws.eval / "testsets.json", doc)
    write_rows(ctx.ws.eval / "testsets.csv", ["test_set", "signal_id", "median_T_B_K"], rows)
    return doc


def load_testsets(ctx: Context) -> dict:
    try:
        return read_json(ctx.ws.eval / "testsets.json")
    except MissingArtifactError:
        raise MissingArtifactError("test sets missing; run testset first") from None


def test_ids(ctx: Context) -> set:
    return set(load_testsets(ctx)[MIXED]["ids"])


def training_candidates(ctx: Context):
    """Bank signals with a FOM result that are not part of any test set."""
    held_out = test_ids(ctx)
    ok = simulated_ok(ctx)
    return [s for s in natural_sorted(bank(ctx)) if s not in held_out and s in ok]


# ---------------------------------------------------------------- train

def _rom_seed(cfg: ExperimentConfig, sid: str) -> int:
    return derive_seed(cfg.seed, "train", cfg.train.seed, sid)


def _train_job(args):
    root, sid, train_config, data_key = args
    ws = Workspace(root)
    signal = ws.load_signal(sid)
    result = ws.load_result(sid)
    try:
        model, report = train([(signal, result)], train_config)
    except TrainingDivergedError as exc:
        return sid, signal.kind, f"failed: {exc}", math.nan, math.nan, 0
    model.provenance["data_key"] = data_key
    save_model(model, ws.model_path(sid))
    return sid, signal.kind, "ok", report.final_loss, report.train_rmse[sid], report.epochs_run


def _model_current(ws: Workspace, sid, train_config, data_key) -> bool:
    path = ws.model_path(sid)
    if not path.is_file():
        return False
    try:
        prov = read_json(path).get("provenance", {})
    except ValueError:
        return False
    return prov.get("data_key") == data_key and prov.get("config") == train_config.to_dict()


def train_roms(ctx: Context, ids=None):
    """Train one 1-signal ROM per signal (default: all training candidates)."""
    cfg = ctx.config
    ids = natural_sorted(ids if ids is not None else training_candidates(ctx))
    held_out = test_ids(ctx) if (ctx.ws.eval / "testsets.json").is_file() else set()
    leaked = sorted(set(ids) & held_out)
    if leaked:
        raise LeakageError(f"refusing to train on test-set signals: {leaked}")
    index = ctx.ws.sim_index()
    jobs, skipped = [], []
    for sid in ids:
        if index.get(sid, {}).get("status") != "ok":
            raise MissingArtifactError(f"no simulation result for {sid}; run simulate first")
        tc = replace(cfg.train, seed=_rom_seed(cfg, sid))
        key = index[sid]["key"]
        if _model_current(ctx.ws, sid, tc, key):
            skipped.append(sid)
        else:
            jobs.append((str(ctx.ws.root), sid, tc, key))
    rows = {r[0]: r for r in ctx.map(_train_job, jobs)}
    report_path = ctx.ws.models / "train_report.csv"
    old = {r["rom_id"]: r for r in read_rows(report_path)} if report_path.is_file() else {}
    for sid in skipped:
        if sid in old:
            r = old[sid]
            rows[sid] = (sid, r["kind"], r["status"], float(r["final_loss"]),
                         float(r["train_rmse_K"]), int(r["epochs"]))
        else:
            prov = load_model(ctx.ws.model_path(sid)).provenance
            rows[sid] = (sid, ctx.ws.load_signal(sid).kind, "ok", prov["final_loss"],
                         prov["train_rmse_K"][sid], prov["config"]["epochs"])
    merged = {**old, **{k: None for k in rows}}
    out = []
    for sid in natural_sorted(merged):
        if sid in rows:
            out.append(list(rows[sid]))
        else:
            r = old[sid]
            out.append([sid, r["kind"], r["status"], float(r["final_loss"]), float(r["train_rmse_K"]),
                        int(r["epochs"])])
    write_rows(report_path, ["rom_id", "kind", "status", "final_loss", "train_rmse_K", "epochs"], out)
    failed = [sid for sid in rows if rows[sid][2] != "ok"]
    for sid in failed:
        ctx.log.warning("train %s: %s", sid, rows[sid][2])
    ctx.log.info("train: %d trained, %d up to date, %d failed", len(jobs), len(skipped), len(failed))
    return {"trained": len(jobs), "skipped": len(skipped), "failed": failed}


# ---------------------------------------------------------------- eval

def rom_vs_fom(model, signal, result) -> MeasureSet:
    """Measures over stacked (T_A, T_B) for samples 1..N; NaNs if the rollout diverges."""
    ref = np.column_stack([result.T_A, result.T_B])
    try:
        pred = model.rollout(signal, ref[0])
    except RolloutDivergedError:
        return NAN_MEASURES
    return error_measures(pred[1:], ref[1:])


def _eval_job(args):
    root, rom_id, signal_ids = args
    ws = Workspace(root)
    model = load_model(ws.model_path(rom_id))
    return [(rom_id, sid, rom_vs_fom(model, ws.load_signal(sid), ws.load_result(sid)))
            for sid in signal_ids]


def evaluate(ctx: Context, rom_ids=None, test_sets=None):
    """Evaluate ROMs on test sets; writes eval/table.csv and eval/aggregates.csv."""
    sets = load_testsets(ctx)
    names = list(test_sets) if test_sets else list(sets)
    for n in names:
        if n not in sets:
            raise MissingArtifactError(f"unknown test set {n}; known: {sorted(sets)}")
    signal_ids = natural_sorted({s for n in names for s in sets[n]["ids"]})
    rom_ids = natural_sorted(rom_ids if rom_ids is not None else ctx.ws.model_ids())
    for rom in rom_ids:
        if not ctx.ws.model_path(rom).is_file():
            raise MissingArtifactError(f"model {rom} not found; run train first")
    table_path = ctx.ws.eval / "table.csv"
    table = EvalTable.from_csv(table_path) if table_path.is_file() else EvalTable()
    cells = ctx.map(_eval_job, [(str(ctx.ws.root), rom, signal_ids) for rom in rom_ids])
    for rows in cells:
        for rom, sid, m in rows:
            table.add(rom, sid, m)
    table.to_csv(table_path)
    write_aggregate_file(ctx, table, sets)
    ctx.log.info("eval: %d ROMs x %d signals", len(rom_ids), len(signal_ids))
    return table


def write_aggregate_file(ctx, table: EvalTable, sets):
    rows = []
    for name in sets:
        ids = sets[name]["ids"]
        for rom in natural_sorted(table.rom_ids()):
            if all((rom, s) in table.rows for s in ids):
                rows.append([rom, name, *table.aggregate(rom, ids).as_tuple()])
    write_rows(ctx.ws.eval / "aggregates.csv", ["rom_id", "test_set", *MEASURES], rows)


def load_aggregates(ctx: Context, test_set: str) -> dict:
    out = {}
    for r in read_rows(ctx.ws.eval / "aggregates.csv"):
        if r["test_set"] == test_set:
            out[r["rom_id"]] = MeasureSet(*(float(r[m]) for m in MEASURES))
    return out


# ---------------------------------------------------------------- kpi / correlate

def kpi(ctx: Context):
    ok = simulated_ok(ctx)
    records = [compute_kpis(ctx.ws.load_signal(s), ctx.ws.load_result(s))
               for s in natural_sorted(ctx.ws.signal_ids()) if s in ok]
    write_kpi_table(records, ctx.ws.report / "kpis.csv")
    ctx.log.info("kpi: %d signals", len(records))
    return {r.signal_id: r for r in records}


def load_kpis(ctx: Context) -> dict:
    from ..kpis import read_kpi_table
    path = ctx.ws.report / "kpis.csv"
    if not path.is_file():
        raise MissingArtifactError("KPI table missing; run kpi first")
    return {r.signal_id: r for r in read_kpi_table(path)}


def bank_roms(ctx: Context, kind=None):
    """ROM ids trained on bank signals (excluding study ROMs), optionally of one kind."""
    kinds = bank(ctx)
    return [r for r in natural_sorted(ctx.ws.model_ids()) if r in kinds and (kind is None or kinds[r] == kind)]


def correlate(ctx: Context):
    """Pearson tables: APRBS ROMs on the APRBS test set, all bank ROMs on MIXED."""
    sets = load_testsets(ctx)
    kpis = load_kpis(ctx)
    out = {}
    ap_name = next((n for n in sets if sets[n]["kind"] == "aprbs"), None)
    plans = []
    if ap_name:
        plans.append((ap_name, bank_roms(ctx, "aprbs")))
    plans.append((MIXED, bank_roms(ctx)))
    for name, roms in plans:
        aggs = load_aggregates(ctx, name)
        roms = [r for r in roms if r in aggs and r in kpis]
        if len(roms) < 3:
            ctx.log.warning("correlate %s: fewer than 3 ROMs, skipped", name)
            continue
        table = pearson_table({r: kpis[r] for r in roms}, {r: aggs[r] for r in roms}, KPI_COLUMNS)
        table.to_csv(ctx.ws.report / f"correlation_{name}.csv")
        write_rows(ctx.ws.report / f"scatter_{name}.csv",
                   ["rom_id", "kind", "std_T_B", "mean_diff_excl_first", "cv_uy", "rmse", "mape"],
                   [[r, kpis[r].kind, kpis[r].std_T_B, kpis[r].mean_diff_excl_first, kpis[r].cv_uy,
                     aggs[r].rmse, aggs[r].mape] for r in roms])
        out[name] = table
        ctx.log.info("correlate %s: %d ROMs", name, len(roms))
    return out


# ---------------------------------------------------------------- studies

def ranking(ctx: Context, test_set=MIXED):
    """Ranked bank ROM ids per kind and best-k means on ``test_set``."""
    kinds = bank(ctx)
    aggs = {r: m for r, m in load_aggregates(ctx, test_set).items() if r in kinds}
    k = ctx.config.evaluation.best_k
    by_kind = {}
    for r in aggs:
        by_kind.setdefault(kinds[r], []).append(r)
    ranked, best = {}, {}
    for kind, roms in by_kind.items():
        kk = min(k, len(roms))
        rk, bk = rank_and_best_k({r: aggs[r] for r in roms}, {r: kind for r in roms}, kk)
        ranked[kind], best[kind] = rk[kind], bk[kind]
    return ranked, best


def write_best_k(ctx: Context):
    sets = load_testsets(ctx)
    rows = []
    for name in sets:
        ranked, best = ranking(ctx, name)
        for kind in sorted(best):
            n = min(ctx.config.evaluation.best_k, len(ranked[kind]))
            rows.append([name, kind, n, " ".join(ranked[kind][:n]), *best[kind].as_tuple()])
    write_rows(ctx.ws.eval / "best_k.csv", ["test_set", "kind", "k", "rom_ids", *MEASURES], rows)
    return rows


def headline_rom(ctx: Context):
    """The APRBS training signal with the highest STD(T_B)."""
    kpis = load_kpis(ctx)
    roms = [r for r in bank_roms(ctx, "aprbs") if r in kpis]
    if not roms:
        return None
    return max(roms, key=lambda r: (kpis[r].std_T_B, [-x if isinstance(x, int) else x for x in natural_key(r)]))


def sinstudy(ctx: Context):
    """Fast and slow sinAPRBS transforms of the best-k APRBS ROMs, trained and evaluated."""
    cfg = ctx.config
    ranked, _ = ranking(ctx, MIXED)
    if "aprbs" not in ranked:
        ctx.log.warning("sinstudy: no APRBS ROMs, skipped")
        return None
    k = min(cfg.evaluation.sin_k, len(ranked["aprbs"]))
    base = ranked["aprbs"][:k]
    new = []
    for sid in base:
        parent = ctx.ws.load_signal(sid)
        for speed in ("fast", "slow"):
            s = aprbs_to_sinaprbs(parent, speed, seed=derive_seed(cfg.seed, speed, sid))
            s.to_files(ctx.ws.signals)
            new.append(s.id)
    simulate(ctx, new)
    ok = simulated_ok(ctx)
    train_roms(ctx, [s for s in new if s in ok])
    trained = set(ctx.ws.model_ids())
    evaluate(ctx, [s for s in new if s in trained], [MIXED])
    aggs = load_aggregates(ctx, MIXED)
    rows, groups = [], {}
    for group, ids in (("aprbs", base), ("fast", [f"{s}f" for s in base]),
                       ("slow", [f"{s}s" for s in base])):
        present = [i for i in ids if i in aggs]
        vals = np.array([aggs[i].as_tuple() for i in present]) if present else np.full((1, 6), np.nan)
        mean = MeasureSet(*(float(v) for v in vals.mean(axis=0)))
        groups[group] = mean
        rows.append([group, len(present), " ".join(present), *mean.as_tuple()])
    write_rows(ctx.ws.eval / "sinstudy.csv", ["group", "n", "rom_ids", *MEASURES], rows)
    ctx.log.info("sinstudy: k = %d", k)
    return groups


def extrapolation(ctx: Context, rom_id=None):
    rom_id = rom_id or headline_rom(ctx)
    if rom_id is None:
        return None
    signal = ctx.ws.load_signal(rom_id)
    repeated = concat_repeat(signal, 2)
    repeated.to_files(ctx.ws.signals)
    simulate(ctx, [repeated.id])
    result = ctx.ws.load_result(repeated.id)
    model = load_model(ctx.ws.model_path(rom_id))
    try:
        res = extrapolation_study(model, signal, 2, result=result)
    except RolloutDivergedError as exc:
        ctx.log.warning("extrapolation %s: %s", rom_id, exc)
        return None
    write_rows(ctx.ws.eval / "extrapolation.csv", ["rom_id", "signal_id", "window", *MEASURES],
               [[rom_id, repeated.id, "in", *res.in_window.as_tuple()],
                [rom_id, repeated.id, "out", *res.out_window.as_tuple()]])
    return res
