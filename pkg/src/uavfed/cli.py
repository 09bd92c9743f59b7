"""Command-line front end: run experiments, compare finished runs, inspect
data partitions, plot metric curves, and sweep selection thresholds."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    load_config,
)
from .data import class_histogram
from .orchestrator import derive_seeds, make_partition, prepare_data, run_experiment
from .presets import PRESETS
from .reports import (
    PLOT_METRICS,
    compare_runs,
    plot_metric,
    write_partition_csv,
    write_result,
    write_summary_csv,
)

OUT_DIR_ENV = "UAVFED_OUT_DIR"


def _resolve_out_dir(arg) -> Path:
    if arg is not None:
        return Path(arg)
    return Path(os.environ.get(OUT_DIR_ENV, "uavfed-run"))


def _build_config(args) -> ExperimentConfig:
    preset = getattr(args, "preset", None)
    if preset and args.config:
        raise ConfigError("--preset and --config are mutually exclusive")
    if preset:
        cfg = PRESETS[preset]()
    elif args.config:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig()
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    if getattr(args, "seed", None) is not None:
        cfg.run.master_seed = args.seed
    return cfg.validate()


def cmd_run(args) -> int:
    cfg = _build_config(args)
    out_dir = _resolve_out_dir(args.out_dir)
    result = run_experiment(cfg)
    paths = write_result(result, out_dir, overrides=args.overrides)
    s = result.summary
    print(f"run {result.label!r}: {s['rounds']} rounds in {result.duration_s:.1f}s")
    print(
        "final_accuracy={:.4f} tau_a={} chi_d={:.4f} canceled={}".format(
            s["final_accuracy"],
            "n/a" if s["tau_a"] is None else f"{s['tau_a']:.2f}s",
            s["chi_d"],
            s["canceled_rounds"],
        )
    )
    for kind in ("manifest", "round_log", "summary"):
        print(f"wrote {paths[kind]}")
    return 0


def cmd_compare(args) -> int:
    out_path = Path(args.out) if args.out else _resolve_out_dir(args.out_dir) / "compare.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rows = compare_runs(args.results, out_path)
    print(f"compared {len(rows)} runs -> {out_path}")
    return 0


def cmd_inspect_partition(args) -> int:
    cfg = _build_config(args)
    seeds = derive_seeds(cfg)
    train, _ = prepare_data(cfg, seeds["data"], seeds["split"])
    partition = make_partition(cfg, train, seeds["partition"])
    hist = class_histogram(train, partition)
    out_path = Path(args.out) if args.out else _resolve_out_dir(args.out_dir) / "partition.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_partition_csv(hist, partition.shard_sizes(), out_path)
    sizes = partition.shard_sizes()
    print(
        f"{partition.n_clients} clients, shard sizes min={min(sizes)} "
        f"median={sorted(sizes)[len(sizes) // 2]} max={max(sizes)}"
    )
    print(f"wrote {out_path}")
    return 0


def cmd_plot(args) -> int:
    out = Path(args.out) if args.out else _resolve_out_dir(args.out_dir) / f"{args.metric}.svg"
    out.parent.mkdir(parents=True, exist_ok=True)
    fig_path, csv_path = plot_metric(args.results, args.metric, out)
    print(f"wrote {fig_path}")
    print(f"wrote {csv_path}")
    return 0


def _parse_sweep_values(raw: str) -> list:
    values = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            values.append(json.loads(chunk))
        except json.JSONDecodeError:
            values.append(chunk)
    if not values:
        raise ConfigError("sweep needs at least one value")
    return values


def cmd_sweep(args) -> int:
    from .orchestrator import run_sweep

    cfg = _build_config(args)
    values = _parse_sweep_values(args.values)
    out_dir = _resolve_out_dir(args.out_dir)
    results = run_sweep(cfg, args.axis, values)
    rows = []
    field = args.axis.split(".")[-1]
    for value, result in results:
        sub = out_dir / f"{field}_{value}"
        write_result(result, sub, overrides=args.overrides + [f"{args.axis}={value}"])
        seed = result.config["run"]["master_seed"]
        rows.append((result.label, result.summary, seed, None))
        print(
            f"{args.axis}={value}: final_accuracy={result.summary['final_accuracy']:.4f}"
        )
    table = out_dir / "sweep.csv"
    write_summary_csv(rows, table)
    print(f"wrote {table}")
    return 0


def _add_config_flags(sub):
    sub.add_argument("--config", type=Path, default=None, help="config JSON path")
    sub.add_argument(
        "--preset",
        choices=sorted(PRESETS),
        default=None,
        help="start from a ready-made setup instead of the defaults",
    )
    sub.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.FIELD=VALUE",
        help="override a config field (repeatable)",
    )
    sub.add_argument("--seed", type=int, default=None, help="master seed override")
    sub.add_argument("--out-dir", type=Path, default=None,
                     help=f"output directory (default ${OUT_DIR_ENV} or ./uavfed-run)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavfed",
        description="Federated-learning simulator with reliability-based "
        "participant selection for UAV fleets.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment and persist the results")
    _add_config_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="tabulate finished runs side by side")
    p_cmp.add_argument("results", nargs="+", help="run directories or manifest paths")
    p_cmp.add_argument("--out", default=None, help="comparison CSV path")
    p_cmp.add_argument("--out-dir", type=Path, default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_ins = sub.add_parser(
        "inspect-partition", help="dump the per-client class histogram for a config"
    )
    _add_config_flags(p_ins)
    p_ins.add_argument("--out", default=None, help="partition CSV path")
    p_ins.set_defaults(func=cmd_inspect_partition)

    p_plot = sub.add_parser("plot", help="plot a per-round metric across runs")
    p_plot.add_argument("results", nargs="+", help="run directories or manifest paths")
    p_plot.add_argument("--metric", choices=PLOT_METRICS, default="accuracy")
    p_plot.add_argument("--out", default=None, help="figure path (.svg or .pdf)")
    p_plot.add_argument("--out-dir", type=Path, default=None)
    p_plot.set_defaults(func=cmd_plot)

    p_sweep = sub.add_parser("sweep", help="rerun one config across values of one field")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True, metavar="SECTION.FIELD")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
