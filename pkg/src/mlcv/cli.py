"""Command-line front end.

Subcommands: ``build-surrogates``, ``estimate``, ``campaign``, ``tables``
and ``allocation``. Configuration files are JSON documents matching
:class:`mlcv.harness.CampaignConfig`; every entry is optional and falls
back to the benchmark defaults. Exit code 0 on success; failures print a
machine-readable JSON error record to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import MlcvError
from .estimators import run_method
from .harness import (
    CampaignConfig,
    allocation_report,
    benchmark_entities,
    build_surrogate_suite,
    correlation_table,
    level_quantity_table,
    run_campaign,
    run_result_to_dict,
)
from .heatbench import exact_expectation, hierarchy
from .sampling import RngStream


def _load_config(path: str) -> CampaignConfig:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return CampaignConfig.load(p)


def _load_suite(config: CampaignConfig, suite_dir: str | None):
    from .estimators import SurrogateSuite
    from .pce import PcSurrogate

    if suite_dir is not None:
        d = Path(suite_dir)
        levels = sorted(d.glob("level*.json"))
        diffs = sorted(d.glob("diff*.json"))
        if not levels:
            raise FileNotFoundError(f"no surrogate files in {suite_dir}")
        return SurrogateSuite.from_pc(
            [PcSurrogate.load(f) for f in levels], [PcSurrogate.load(f) for f in diffs]
        ), None
    built = build_surrogate_suite(
        config.heat, config.plan, RngStream(config.master_seed, purpose="suite")
    )
    return built.suite, built


def cmd_build_surrogates(args) -> int:
    config = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    built = build_surrogate_suite(
        config.heat, config.plan, RngStream(config.master_seed, purpose="suite")
    )
    for level, model in enumerate(built.suite.level_models):
        model.save(out / f"level{level}.json")
    for level, model in enumerate(built.suite.diff_models, start=1):
        model.save(out / f"diff{level}.json")
    lines = ["model,n,degree,terms,loo,q2"]
    for row in built.quality_rows:
        lines.append(
            f"{row['model']},{row['n']},{row['degree']},{row['terms']},"
            f"{row['loo']!r},{row['q2']!r}"
        )
    (out / "quality.csv").write_text("\n".join(lines) + "\n")
    print(f"construction cost: {built.construction_cost:g}")
    for row in built.quality_rows:
        print(f"{row['model']}: n={row['n']} degree={row['degree']} terms={row['terms']} q2={row['q2']:.4f}")
    print(f"surrogates written to {out}")
    return 0


def cmd_estimate(args) -> int:
    config = _load_config(args.config)
    h = hierarchy(config.heat)
    suite = None
    if args.method not in ("MC", "MLMC"):
        suite, _ = _load_suite(config, args.surrogates)
    stream = RngStream(
        args.seed if args.seed is not None else config.master_seed,
        purpose=f"estimate|{args.method}|{args.budget:g}",
    )
    result = run_method(
        args.method,
        h,
        suite,
        args.budget,
        stream,
        statistic=args.statistic,
        n_init=config.n_init,
        growth=config.growth,
    )
    record = run_result_to_dict(result)
    record["reference"] = exact_expectation(config.heat)
    if args.out:
        Path(args.out).write_text(json.dumps(record) + "\n")
    print(f"{args.method} estimate: {result.estimate!r} (consumed {result.consumed:g})")
    return 0


def cmd_campaign(args) -> int:
    config = _load_config(args.config)
    report = run_campaign(config)
    out = Path(args.out)
    report.save(out)
    print(report.summary_text(), end="")
    print(f"campaign written to {out}")
    return 0


def cmd_tables(args) -> int:
    config = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    suite, _ = _load_suite(config, args.surrogates)
    space = hierarchy(config.heat).space
    names, matrix = correlation_table(
        benchmark_entities(config.heat, suite),
        space,
        args.sample_size,
        RngStream(config.master_seed, purpose="correlations"),
    )
    lines = ["name," + ",".join(names)]
    for name, row in zip(names, matrix):
        lines.append(name + "," + ",".join(repr(float(v)) for v in row))
    (out / "correlations.csv").write_text("\n".join(lines) + "\n")

    table = level_quantity_table(
        config.heat, suite, args.sample_size, RngStream(config.master_seed, purpose="quantities")
    )
    lines = ["quantity,method," + ",".join(f"level{l}" for l in range(config.heat.n_levels))]
    lines.append("v,," + ",".join(repr(float(v)) for v in table["v"]))
    for method, vals in table["methods"].items():
        lines.append(f"r2,{method}," + ",".join(repr(float(v)) for v in vals["r2"]))
        lines.append(f"share,{method}," + ",".join(repr(float(v)) for v in vals["shares"]))
        lines.append(f"s_sq,{method}," + ",".join(repr(float(v)) for v in vals["s_partial_sq"]))
    (out / "level_quantities.csv").write_text("\n".join(lines) + "\n")
    print(f"tables written to {out}")
    return 0


def cmd_allocation(args) -> int:
    config = _load_config(args.config)
    runs = []
    for path in args.traces:
        data = json.loads(Path(path).read_text())
        runs.extend(data if isinstance(data, list) else [data])
    costs = hierarchy(config.heat).correction_costs()
    text = allocation_report(runs, costs)
    if args.out:
        Path(args.out).write_text(text)
        print(f"allocation report written to {args.out}")
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlcv",
        description="Multilevel surrogate-based control-variate Monte Carlo toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-surrogates", help="fit per-level surrogates and write them out")
    p.add_argument("config")
    p.add_argument("--out", default="surrogates")
    p.set_defaults(func=cmd_build_surrogates)

    p = sub.add_parser("estimate", help="one estimator run under a budget")
    p.add_argument("config")
    p.add_argument("--method", required=True)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--statistic", default="expectation", choices=("expectation", "variance"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--surrogates", default=None, help="directory written by build-surrogates")
    p.add_argument("--out", default=None, help="write the run record JSON here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("campaign", help="full methods x budgets x replicates sweep")
    p.add_argument("config")
    p.add_argument("--out", default="campaign")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("tables", help="correlation and per-level quantity tables")
    p.add_argument("config")
    p.add_argument("--out", default="tables")
    p.add_argument("--surrogates", default=None)
    p.add_argument("--sample-size", type=int, default=1000)
    p.set_defaults(func=cmd_tables)

    p = sub.add_parser("allocation", help="summarize sample allocations of saved runs")
    p.add_argument("config")
    p.add_argument("traces", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_allocation)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MlcvError, FileNotFoundError, json.JSONDecodeError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
