"""Result persistence and presentation: JSONL round trails, versioned CSV
tables, run manifests, and vector training-curve figures with CSV companions.

Every CSV embeds its schema version as the first header cell; that cell doubles
as the header of the run-label (or row-label) column.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .metrics import asr_untargeted  # noqa: E402

SCHEMA_SUMMARY = "uavfed-summary-v1"
SCHEMA_SERIES = "uavfed-series-v1"
SCHEMA_PARTITION = "uavfed-partition-v1"
SCHEMA_MANIFEST = "uavfed-manifest-v1"

ROUND_LOG_NAME = "rounds.jsonl"
SUMMARY_NAME = "summary.csv"
MANIFEST_NAME = "manifest.json"

SUMMARY_COLUMNS = (
    "strategy",
    "master_seed",
    "rounds",
    "final_accuracy",
    "mean_last10_accuracy",
    "best_accuracy",
    "tau_a",
    "chi_d",
    "mean_fp",
    "mean_fn",
    "final_asr_targeted",
    "mean_last10_asr_targeted",
    "mean_last10_asr_targeted_classwise",
    "asr_untargeted",
    "canceled_rounds",
    "total_dropouts",
    "total_selection_slots",
)

PLOT_METRICS = ("accuracy", "asr_targeted", "asr_untargeted", "round_time")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def _open_csv(path):
    fh = open(path, "w", encoding="utf-8", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def write_round_log(result, path):
    """One JSON object per round, keys sorted for byte-stable reruns."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in result.round_logs:
            fh.write(json.dumps(dataclasses.asdict(entry), sort_keys=True))
            fh.write("\n")


def _summary_row(label, summary, master_seed, extra_asr_ua=None):
    merged = dict(summary)
    merged["master_seed"] = master_seed
    merged["asr_untargeted"] = extra_asr_ua
    return [label] + [_fmt(merged.get(col)) for col in SUMMARY_COLUMNS]


def write_summary_csv(rows, path):
    """rows: list of (label, summary dict, master seed, asr_ua or None)."""
    fh, writer = _open_csv(path)
    with fh:
        writer.writerow([SCHEMA_SUMMARY] + list(SUMMARY_COLUMNS))
        for label, summary, seed, asr_ua in rows:
            writer.writerow(_summary_row(label, summary, seed, asr_ua))


def write_result(result, out_dir, overrides=()) -> dict:
    """Persist a run as rounds.jsonl + summary.csv + manifest.json; returns
    the written paths keyed by kind."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "round_log": out_dir / ROUND_LOG_NAME,
        "summary": out_dir / SUMMARY_NAME,
        "manifest": out_dir / MANIFEST_NAME,
    }
    write_round_log(result, paths["round_log"])
    seed = result.config["run"]["master_seed"]
    write_summary_csv([(result.label, result.summary, seed, None)], paths["summary"])

    from . import __version__

    manifest = {
        "schema": SCHEMA_MANIFEST,
        "tool_version": __version__,
        "label": result.label,
        "strategy": result.strategy,
        "master_seed": seed,
        "config": result.config,
        "overrides": list(overrides),
        "roles": result.roles,
        "shard_sizes": result.shard_sizes,
        "summary": result.summary,
        "duration_s": result.duration_s,
        "files": {kind: p.name for kind, p in paths.items()},
    }
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def load_manifest(path) -> dict:
    """Accepts a manifest path or a run directory containing manifest.json."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != SCHEMA_MANIFEST:
        raise ValueError(f"{path} is not a run manifest (schema {manifest.get('schema')!r})")
    manifest["_dir"] = str(path.parent)
    return manifest


def load_rounds(manifest: dict) -> list:
    log_path = Path(manifest["_dir"]) / manifest["files"]["round_log"]
    rounds = []
    with open(log_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rounds.append(json.loads(line))
    return rounds


def scenario_fingerprint(config: dict) -> str:
    """Identity of the simulated world: data, fleet, model, and channel blocks.

    Selection strategy and attack settings are deliberately excluded so
    defended/undefended and attacked/clean runs of one scenario compare."""
    world = {k: config[k] for k in ("data", "fleet", "model", "channel")}
    return json.dumps(world, sort_keys=True)


def _pair_clean_accuracy(manifest: dict, manifests: list):
    """Mean last-10 accuracy of the matching no-attack run, if one is present."""
    if manifest["config"]["attack"]["kind"] == "none":
        return None
    for other in manifests:
        if other is manifest:
            continue
        if (
            other["config"]["attack"]["kind"] == "none"
            and other["strategy"] == manifest["strategy"]
            and other["master_seed"] == manifest["master_seed"]
        ):
            return other["summary"]["mean_last10_accuracy"]
    return None


def compare_runs(manifest_paths, out_path) -> list:
    """Side-by-side table of runs from one scenario; refuses mixed scenarios.

    When an attacked run has a same-strategy same-seed clean companion among
    the inputs, its untargeted attack success rate is filled in from the pair.
    """
    if len(manifest_paths) < 2:
        raise ValueError("compare needs at least two result paths")
    manifests = [load_manifest(p) for p in manifest_paths]
    prints = {scenario_fingerprint(m["config"]) for m in manifests}
    if len(prints) > 1:
        raise ValueError(
            "refusing to compare runs from different scenarios "
            "(data/fleet/model/channel specs differ)"
        )
    rows = []
    for m in manifests:
        clean_acc = _pair_clean_accuracy(m, manifests)
        asr_ua = None
        if clean_acc is not None:
            asr_ua = asr_untargeted(clean_acc, m["summary"]["mean_last10_accuracy"])
        rows.append((m["label"], m["summary"], m["master_seed"], asr_ua))
    write_summary_csv(rows, out_path)
    return rows


def _metric_series(metric: str, manifest: dict, rounds: list, all_manifests, all_rounds):
    if metric == "accuracy":
        return [e["global_accuracy"] for e in rounds]
    if metric == "round_time":
        return [e["round_time_s"] for e in rounds]
    if metric == "asr_targeted":
        series = [e["asr_targeted"] for e in rounds]
        if any(v is None for v in series):
            raise ValueError(
                f"run {manifest['label']!r} has no targeted-attack trace to plot"
            )
        return series
    if metric == "asr_untargeted":
        for other, other_rounds in zip(all_manifests, all_rounds):
            if other is manifest:
                continue
            if (
                other["config"]["attack"]["kind"] == "none"
                and other["strategy"] == manifest["strategy"]
                and other["master_seed"] == manifest["master_seed"]
            ):
                clean = [e["global_accuracy"] for e in other_rounds]
                attacked = [e["global_accuracy"] for e in rounds]
                n = min(len(clean), len(attacked))
                return [asr_untargeted(clean[i], attacked[i]) for i in range(n)]
        raise ValueError(
            f"run {manifest['label']!r} has no paired clean run among the inputs; "
            "asr_untargeted needs one"
        )
    raise ValueError(f"unknown plot metric {metric!r}; choose from {PLOT_METRICS}")


def plot_metric(manifest_paths, metric: str, out_path):
    """Render one line per run over FL rounds as a vector-graphics file and
    write the plotted series next to it as CSV."""
    if metric not in PLOT_METRICS:
        raise ValueError(f"unknown plot metric {metric!r}; choose from {PLOT_METRICS}")
    manifests = [load_manifest(p) for p in manifest_paths]
    all_rounds = [load_rounds(m) for m in manifests]
    for m, rounds in zip(manifests, all_rounds):
        if not rounds:
            raise ValueError(f"run {m['label']!r} has an empty round log")

    out_path = Path(out_path)
    if out_path.suffix.lower() not in (".svg", ".pdf"):
        out_path = out_path.with_suffix(".svg")
    series = []
    skip_pairs = metric == "asr_untargeted"
    for m, rounds in zip(manifests, all_rounds):
        if skip_pairs and m["config"]["attack"]["kind"] == "none":
            continue
        values = _metric_series(metric, m, rounds, manifests, all_rounds)
        series.append((m["label"], values))
    if not series:
        raise ValueError(f"no plottable runs for metric {metric!r}")

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for label, values in series:
        ax.plot(range(1, len(values) + 1), values, label=label, linewidth=1.6)
    ax.set_xlabel("FL round")
    ax.set_ylabel(metric.replace("_", " "))
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)

    csv_path = out_path.with_suffix(".csv")
    fh, writer = _open_csv(csv_path)
    with fh:
        writer.writerow([SCHEMA_SERIES, "round", metric])
        for label, values in series:
            for i, v in enumerate(values, start=1):
                writer.writerow([label, i, _fmt(float(v))])
    return out_path, csv_path


def write_partition_csv(histogram, shard_sizes, out_path):
    """Per-client class histogram table; histogram is (n_clients, n_classes)."""
    n_clients, n_classes = histogram.shape
    fh, writer = _open_csv(out_path)
    with fh:
        writer.writerow(
            [SCHEMA_PARTITION, "size"] + [f"class_{c}" for c in range(n_classes)]
        )
        for cid in range(n_clients):
            writer.writerow(
                [f"client_{cid}", shard_sizes[cid]] + [int(v) for v in histogram[cid]]
            )
