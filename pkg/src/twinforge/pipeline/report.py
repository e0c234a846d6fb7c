"""Acceptance checks, the markdown report and its figures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..evaluation import MEASURES
from ..errors import MissingArtifactError
from . import stages
from .stages import MIXED, Context, read_rows, write_rows

RMSE_MAX = 2.5
MAPE_MAX = 1.0
R_STD_MAX = -0.3
R_DIFF_MAX = -0.2
STEP_FACTOR = 5.0
EXTRAP_FACTOR = 5.0


@dataclass
class Check:
    name: str
    status: str  # pass, fail or skipped
    value: str
    threshold: str
    gating: bool = True


def _pass(ok):
    return "pass" if ok else "fail"


def _f(v, digits=3):
    return "nan" if v is None or not np.isfinite(v) else f"{v:.{digits}f}"


def gather(ctx: Context) -> dict:
    """Collect the numbers the report and the checks are built from."""
    sets = stages.load_testsets(ctx)
    kpis = stages.load_kpis(ctx)
    ap_name = next((n for n in sets if sets[n]["kind"] == "aprbs"), None)
    info = {"sets": sets, "ap_name": ap_name, "kpis": kpis}
    info["ranked"], info["best"] = stages.ranking(ctx, MIXED)
    info["headline"] = stages.headline_rom(ctx)
    if ap_name:
        info["ap_aggs"] = stages.load_aggregates(ctx, ap_name)
    info["mixed_aggs"] = stages.load_aggregates(ctx, MIXED)
    corr = {}
    for name in (ap_name, MIXED):
        path = ctx.ws.report / f"correlation_{name}.csv"
        if name and path.is_file():
            corr[name] = {r["measure"]: r for r in read_rows(path)}
    info["corr"] = corr
    info["n_aprbs_roms"] = len([r for r in stages.bank_roms(ctx, "aprbs") if r in info.get("ap_aggs", {})])
    path = ctx.ws.eval / "sinstudy.csv"
    info["sinstudy"] = {r["group"]: r for r in read_rows(path)} if path.is_file() else {}
    path = ctx.ws.eval / "extrapolation.csv"
    info["extrapolation"] = {r["window"]: r for r in read_rows(path)} if path.is_file() else {}
    return info


def checks(ctx: Context, info: dict) -> list[Check]:
    cfg = ctx.config
    out = []
    # no test signal was used for training
    held_out = set(info["sets"][MIXED]["ids"])
    leaked = sorted(held_out & set(ctx.ws.model_ids()))
    out.append(Check("no_test_leakage", _pass(not leaked), " ".join(leaked) or "none", "empty"))

    head = info["headline"]
    if head and info.get("ap_aggs") and head in info["ap_aggs"]:
        m = info["ap_aggs"][head]
        ok = m.rmse <= RMSE_MAX and m.mape <= MAPE_MAX
        out.append(Check("rom_quality", _pass(ok), f"{head}: RMSE {_f(m.rmse)} K, MAPE {_f(m.mape)} %",
                         f"RMSE <= {RMSE_MAX} K and MAPE <= {MAPE_MAX} %"))
    else:
        out.append(Check("rom_quality", "skipped", "no APRBS ROM", "-"))

    corr = info["corr"].get(info["ap_name"])
    n = info["n_aprbs_roms"]
    need = cfg.evaluation.min_correlation_roms
    if corr and n >= need:
        r_std = float(corr["rmse"]["std_T_B"])
        r_diff = float(corr["rmse"]["mean_diff_excl_first"])
        ok = r_std < R_STD_MAX and r_diff < R_DIFF_MAX
        out.append(Check("kpi_correlation", _pass(ok),
                         f"n={n}: r(STD T_B, RMSE) {_f(r_std)}, r(mean diff excl first, RMSE) {_f(r_diff)}",
                         f"< {R_STD_MAX} and < {R_DIFF_MAX}"))
    else:
        out.append(Check("kpi_correlation", "skipped", f"{n} APRBS ROMs", f">= {need} ROMs needed"))

    best, ranked = info["best"], info["ranked"]
    aggs = info["mixed_aggs"]
    if "aprbs" in best and "multisine" in best:
        a, m = best["aprbs"].rmse, best["multisine"].rmse
        out.append(Check("aprbs_vs_multisine", _pass(a <= m), f"APRBS {_f(a)} K, multi-sine {_f(m)} K",
                         "APRBS <= multi-sine (best-k mean RMSE on MIXED)"))
    else:
        out.append(Check("aprbs_vs_multisine", "skipped", "kind missing", "-"))
    step_roms = ranked.get("step", [])
    if step_roms and "aprbs" in ranked:
        s = aggs[step_roms[0]].rmse
        b = aggs[ranked["aprbs"][0]].rmse
        out.append(Check("step_vs_aprbs", _pass(s >= STEP_FACTOR * b), f"step {_f(s)} K, best APRBS {_f(b)} K",
                         f"step >= {STEP_FACTOR} x best APRBS"))
    else:
        out.append(Check("step_vs_aprbs", "skipped", "kind missing", "-"))

    sin = info["sinstudy"]
    if all(g in sin for g in ("aprbs", "fast", "slow")):
        a, f, s = (float(sin[g]["rmse"]) for g in ("aprbs", "fast", "slow"))
        out.append(Check("sinaprbs_degradation", _pass(a <= f <= s),
                         f"APRBS {_f(a)} K, fast {_f(f)} K, slow {_f(s)} K", "APRBS <= fast <= slow"))
    else:
        out.append(Check("sinaprbs_degradation", "skipped", "study not run", "-"))

    ex = info["extrapolation"]
    if ex:
        i, o = float(ex["in"]["rmse"]), float(ex["out"]["rmse"])
        out.append(Check("extrapolation", _pass(o <= EXTRAP_FACTOR * i),
                         f"in {_f(i)} K, out {_f(o)} K", f"out <= {EXTRAP_FACTOR} x in", gating=False))
    return out


def exit_code(check_list) -> int:
    return int(any(c.gating and c.status == "fail" for c in check_list))


def write_markdown(ctx: Context, info: dict, check_list, figures):
    lines = ["# twinforge report", ""]
    cfg = ctx.config
    lines += [f"Seed {cfg.seed}; bank: {cfg.bank.aprbs} APRBS, {cfg.bank.sinaprbs} sinAPRBS, "
              f"{cfg.bank.multisine} multi-sine, {cfg.bank.schroeder} Schroeder multi-sine, "
              f"{cfg.bank.step} step, {cfg.bank.sine} sine.", ""]
    lines += ["## Test sets", "", "| set | n | chi2 | p | passed |", "|---|---|---|---|---|"]
    for name, s in info["sets"].items():
        if name == MIXED:
            lines.append(f"| {name} | {len(s['ids'])} | | | |")
        else:
            lines.append(f"| {name} | {len(s['ids'])} | {_f(s['statistic'])} | {_f(s['p'])} | {s['passed']} |")
    lines.append("")

    head = info["headline"]
    if head and head in info.get("ap_aggs", {}):
        m = info["ap_aggs"][head]
        lines += [f"## Headline ROM: {head}", "",
                  f"Selected as the APRBS training signal with the highest STD(T_B) "
                  f"({_f(info['kpis'][head].std_T_B, 2)} K). Mean measures on {info['ap_name']}:", "",
                  "| " + " | ".join(MEASURES) + " |", "|" + "---|" * len(MEASURES),
                  "| " + " | ".join(_f(v) for v in m.as_tuple()) + " |", ""]

    lines += ["## Best ROM per kind (MIXED)", "", "| kind | best ROM | RMSE / K | best-k mean RMSE / K |",
              "|---|---|---|---|"]
    for kind in sorted(info["ranked"]):
        top = info["ranked"][kind][0]
        lines.append(f"| {kind} | {top} | {_f(info['mixed_aggs'][top].rmse)} | {_f(info['best'][kind].rmse)} |")
    lines.append("")

    corr = info["corr"].get(info["ap_name"])
    if corr:
        lines += [f"## Correlations with mean RMSE on {info['ap_name']}", ""]
        for k in ("std_T_B", "mean_diff_excl_first", "cv_uy", "crest_factor"):
            lines.append(f"- r(RMSE, {k}) = {_f(float(corr['rmse'][k]))}")
        lines.append("")

    lines += ["## Checks", "", "| check | status | value | threshold | gating |", "|---|---|---|---|---|"]
    for c in check_list:
        lines.append(f"| {c.name} | {c.status} | {c.value} | {c.threshold} | {'yes' if c.gating else 'no'} |")
    lines.append("")
    if figures:
        lines += ["## Figures", ""]
        lines += [f"![{p.stem}](figures/{p.name})" for p in figures]
        lines.append("")
    (ctx.ws.report / "report.md").write_text("\n".join(lines))


def make_figures(ctx: Context, info: dict):
    """Render PNG figures with the Agg backend; returns the written paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig_dir = ctx.ws.report / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def save(fig, name):
        path = fig_dir / name
        fig.savefig(path, dpi=110, metadata={"Software": None})
        plt.close(fig)
        written.append(path)

    # test-set MEDIAN(T_B) histograms
    sets = {n: s for n, s in info["sets"].items() if n != MIXED}
    if sets:
        fig, axes = plt.subplots(1, len(sets), figsize=(4 * len(sets), 3), squeeze=False)
        for ax, (name, s) in zip(axes[0], sets.items()):
            edges = np.linspace(*s["range"], len(s["counts"]) + 1)
            ax.bar(edges[:-1], s["counts"], width=np.diff(edges), align="edge", edgecolor="k")
            ax.set_title(f"{name}: p = {s['p']:.2f}")
            ax.set_xlabel("MEDIAN(T_B) / K")
        axes[0][0].set_ylabel("count")
        fig.tight_layout()
        save(fig, "testsets.png")

    # KPI scatter for APRBS ROMs
    path = ctx.ws.report / f"scatter_{info['ap_name']}.csv"
    if info["ap_name"] and path.is_file():
        rows = read_rows(path)
        rmse = np.array([float(r["rmse"]) for r in rows])
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
        for ax, key, label in ((axes[0], "std_T_B", "STD(T_B) / K"),
                               (axes[1], "mean_diff_excl_first", "mean level jump (excl. first) / K")):
            x = np.array([float(r[key]) if r[key] not in ("", "nan") else np.nan for r in rows])
            ax.scatter(rmse, x, s=14)
            ax.set_xlabel(f"mean RMSE on {info['ap_name']} / K")
            ax.set_ylabel(label)
        fig.tight_layout()
        save(fig, "kpi_scatter.png")

    # best-k bars per kind and test set
    path = ctx.ws.eval / "best_k.csv"
    if path.is_file():
        rows = read_rows(path)
        names = list(dict.fromkeys(r["test_set"] for r in rows))
        kinds = sorted({r["kind"] for r in rows})
        fig, ax = plt.subplots(figsize=(8, 3.5))
        width = 0.8 / max(len(kinds), 1)
        for i, kind in enumerate(kinds):
            vals = [next((float(r["rmse"]) for r in rows if r["test_set"] == n and r["kind"] == kind), np.nan)
                    for n in names]
            ax.bar(np.arange(len(names)) + i * width, vals, width, label=kind)
        ax.set_xticks(np.arange(len(names)) + 0.4 - width / 2)
        ax.set_xticklabels(names)
        ax.set_ylabel("best-k mean RMSE / K")
        ax.legend(fontsize=7)
        fig.tight_layout()
        save(fig, "best_k.png")

    # extrapolation beyond the training window
    head = info["headline"]
    if head and info["extrapolation"]:
        from ..rom import load_model
        rep_id = info["extrapolation"]["in"]["signal_id"]
        try:
            signal = ctx.ws.load_signal(rep_id)
            result = ctx.ws.load_result(rep_id)
            pred = load_model(ctx.ws.model_path(head)).rollout(signal, [result.T_A[0], result.T_B[0]])
        except (MissingArtifactError, RuntimeError):
            pred = None
        if pred is not None:
            fig, ax = plt.subplots(figsize=(8, 3.5))
            ax.plot(result.times, result.T_oven, color="0.6", lw=0.8, label="T_oven")
            ax.plot(result.times, result.T_A, "C0", label="T_A FOM")
            ax.plot(result.times, pred[:, 0], "C0--", label="T_A ROM")
            ax.plot(result.times, result.T_B, "C3", label="T_B FOM")
            ax.plot(result.times, pred[:, 1], "C3--", label="T_B ROM")
            ax.axvline(signal.horizon / 2, color="k", lw=0.8)
            ax.set_xlabel("t / s")
            ax.set_ylabel("T / K")
            ax.legend(fontsize=7, ncol=3)
            fig.tight_layout()
            save(fig, "extrapolation.png")
    return written


def report(ctx: Context, figures: bool = True):
    """Write criteria.csv, report.md and figures; returns (checks, exit code)."""
    stages.write_best_k(ctx)
    info = gather(ctx)
    check_list = checks(ctx, info)
    write_rows(ctx.ws.report / "criteria.csv", ["check", "status", "value", "threshold", "gating"],
               [[c.name, c.status, c.value, c.threshold, "yes" if c.gating else "no"] for c in check_list])
    paths = make_figures(ctx, info) if figures else []
    write_markdown(ctx, info, check_list, paths)
    code = exit_code(check_list)
    for c in check_list:
        ctx.log.info("check %s: %s (%s)", c.name, c.status, c.value)
    return check_list, code


def run_pipeline(ctx: Context, figures: bool = True):
    stages.synth(ctx)
    stages.simulate(ctx)
    stages.testset(ctx)
    stages.train_roms(ctx)
    stages.evaluate(ctx)
    stages.kpi(ctx)
    stages.correlate(ctx)
    if ctx.config.evaluation.sin_k > 0:
        stages.sinstudy(ctx)
    if ctx.config.evaluation.extrapolation:
        stages.extrapolation(ctx)
    return report(ctx, figures)

