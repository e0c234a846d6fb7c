"""Command-line entry point: ``twinforge <command> --config FILE [--seed N] [--jobs N]``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import TwinforgeError
from .pipeline import stages
from .pipeline.config import load_config
from .pipeline.report import run_pipeline

COMMANDS = ("synth", "simulate", "train", "eval", "testset", "kpi", "correlate", "pipeline")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twinforge",
                                     description="Signal design, FOM simulation and 1-signal ROM studies.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment config (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the experiment seed")
    common.add_argument("--jobs", type=int, help="parallel worker processes")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="write the signal bank")
    p = sub.add_parser("simulate", parents=[common], help="run the FOM (cached)")
    p.add_argument("--signals", nargs="+", help="signal ids (default: all)")
    p = sub.add_parser("train", parents=[common], help="train 1-signal ROMs")
    p.add_argument("--signals", nargs="+", help="training signal ids (default: all non-test)")
    p = sub.add_parser("eval", parents=[common], help="evaluate ROMs on test sets")
    p.add_argument("--models", nargs="+", help="ROM ids (default: all)")
    p.add_argument("--testset", nargs="+", help="test set names (default: all)")
    sub.add_parser("testset", parents=[common], help="select chi-square test sets")
    sub.add_parser("kpi", parents=[common], help="compute signal KPIs")
    sub.add_parser("correlate", parents=[common], help="KPI vs error correlation tables")
    p = sub.add_parser("pipeline", parents=[common], help="run every stage and write the report")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        if args.jobs is not None:
            config = replace(config, jobs=args.jobs)
        ctx = stages.Context.open(config)
        ctx.log.info("command %s (seed %d, jobs %d)", args.command, config.seed, config.jobs)
        if args.command == "synth":
            ids = stages.synth(ctx)
            print(f"{len(ids)} signals written to {ctx.ws.signals}")
        elif args.command == "simulate":
            out = stages.simulate(ctx, args.signals)
            print(f"cached {out['hits']}, computed {out['computed']}, failed {len(out['failed'])}")
            for sid in out["failed"]:
                print(f"  failed: {sid}", file=sys.stderr)
        elif args.command == "testset":
            doc = stages.testset(ctx)
            for name, s in doc.items():
                extra = f" chi2 {s['statistic']:.3f} p {s['p']:.3f}" if "p" in s else ""
                print(f"{name}: {len(s['ids'])} signals{extra}")
        elif args.command == "train":
            out = stages.train_roms(ctx, args.signals)
            print(f"trained {out['trained']}, up to date {out['skipped']}, failed {len(out['failed'])}")
        elif args.command == "eval":
            table = stages.evaluate(ctx, args.models, args.testset)
            print(f"{len(table.rows)} evaluation rows in {ctx.ws.eval / 'table.csv'}")
        elif args.command == "kpi":
            recs = stages.kpi(ctx)
            print(f"{len(recs)} KPI rows in {ctx.ws.report / 'kpis.csv'}")
        elif args.command == "correlate":
            tables = stages.correlate(ctx)
            for name, t in tables.items():
                print(f"{name}: n={t.n} r(RMSE, std_T_B) = {t.get('rmse', 'std_T_B'):.3f}")
        elif args.command == "pipeline":
            checks, code = run_pipeline(ctx, figures=not args.no_figures)
            for c in checks:
                print(f"{c.status.upper():8s} {c.name}: {c.value}")
            print(f"report: {ctx.ws.report / 'report.md'}")
            return code
        return 0
    except TwinforgeError as exc:
        print(f"twinforge: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
