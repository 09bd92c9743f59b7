"""Experiment loop: builds the fleet, runs the round cascade (or a baseline
selection strategy), simulates clients over the channel, aggregates, and logs
everything needed to recompute every reported number from the round trail."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import baselines, defense
from .baselines import (
    CAPPED,
    PROPOSED,
    RANDOM,
    RANDOM_KMEANS,
    SPEED,
    WEIGHT_DIVERGENCE,
)
from .channel import ChannelParams, ComputeProfile, UavGeometry, round_duration
from .clients import (
    COMPLETED,
    DROPOUT,
    DROPPED_OUT,
    HONEST,
    MALICIOUS_TARGETED,
    MALICIOUS_UNTARGETED,
    STRAGGLER,
    BehaviorProfile,
    RoundChannel,
    TrainingHyper,
    UavClient,
    client_times,
    simulate_client_round,
)
from .config import ExperimentConfig, apply_overrides, config_to_dict
from .data import (
    LabeledDataset,
    Partition,
    generate_synthetic_dataset,
    load_idx_dataset,
    partition_distribution1,
    partition_distribution2,
    split_train_test,
)
from .metrics import (
    asr_targeted,
    asr_targeted_classwise,
    average_round_time,
    detection_rates,
    dropout_ratio,
)
from .model import ModelParams, apply_update, evaluate, init_model

log = logging.getLogger(__name__)


@dataclass
class RoundLog:
    """Full per-round evidence trail; summary numbers are recomputable from it."""

    round_index: int
    survivors_straggler_filter: list
    selected: list
    aggregated: list
    filter3_pool: list
    flagged: list
    iqr_cutoff_s: float | None
    deadline_s: float | None
    est_times: dict
    statuses: dict
    elapsed: dict
    cluster_sizes: list
    noise_ids: list
    abstained: bool
    canceled: bool
    round_time_s: float
    selection_slots: int
    dropouts: int
    global_accuracy: float
    per_class_accuracy: dict
    mean_loss: float
    asr_targeted: float | None = None
    asr_targeted_classwise: float | None = None
    fp: float | None = None
    fn: float | None = None
    objective: float | None = None
    reliability_after: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    config: dict
    label: str
    strategy: str
    final_params: ModelParams
    round_logs: list
    summary: dict
    roles: dict
    shard_sizes: list
    duration_s: float


def _seed_of(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1)[0])


def derive_seeds(config: ExperimentConfig) -> dict:
    """Per-purpose seed streams spawned from the master seed, so changing one
    axis (say, the attack draw) never perturbs the others. Data and partition
    seeds pinned in the config take precedence over the derived ones."""
    root = np.random.SeedSequence(config.run.master_seed)
    data_seq, split_seq, part_seq, fleet_seq, init_seq, rounds_seq = root.spawn(6)
    return {
        "data": config.data.data_seed
        if config.data.data_seed is not None
        else _seed_of(data_seq),
        "split": _seed_of(split_seq),
        "partition": config.data.partition_seed
        if config.data.partition_seed is not None
        else _seed_of(part_seq),
        "init": _seed_of(init_seq),
        "fleet_seq": fleet_seq,
        "rounds_seq": rounds_seq,
    }


def prepare_data(config: ExperimentConfig, data_seed: int, split_seed: int):
    d = config.data
    if d.source == "idx":
        full = load_idx_dataset(d.idx_images, d.idx_labels)
    else:
        class_scale = {int(k): float(v) for k, v in d.class_scale.items()} or None
        full = generate_synthetic_dataset(
            d.num_classes,
            d.per_class,
            d.dim,
            d.separation,
            data_seed,
            components=d.components,
            component_spread=d.component_spread,
            feature_noise=d.feature_noise,
            class_scale=class_scale,
        )
    return split_train_test(full, d.train_fraction, split_seed)


def make_partition(config: ExperimentConfig, train: LabeledDataset, seed: int) -> Partition:
    d = config.data
    if d.distribution == 1:
        return partition_distribution1(
            train,
            config.fleet.n_clients,
            d.k_percent,
            d.per_client_cap,
            seed,
            size_concentration=d.size_concentration,
            min_shard=d.min_shard,
        )
    return partition_distribution2(train, config.fleet.n_clients, d.classes_per_client, seed)


def _resolve_roles(config: ExperimentConfig, rng) -> dict:
    """Planted role id sets, drawn disjointly when not pinned in the config."""
    f, a = config.fleet, config.attack
    remaining = list(range(f.n_clients))

    def take(explicit, count):
        nonlocal remaining
        if explicit is not None:
            chosen = sorted(int(i) for i in explicit)
        else:
            picks = rng.choice(len(remaining), size=min(count, len(remaining)), replace=False)
            chosen = sorted(remaining[i] for i in picks)
        remaining = [i for i in remaining if i not in set(chosen)]
        return chosen

    stragglers = take(f.straggler_ids, f.n_stragglers)
    dropouts = take(f.dropout_ids, f.n_dropout)
    if a.kind == "none":
        malicious = []
    else:
        n_mal = len(a.malicious_ids) if a.malicious_ids is not None else round(
            a.fraction * f.n_clients
        )
        malicious = take(a.malicious_ids, n_mal)
    return {"stragglers": stragglers, "dropouts": dropouts, "malicious": malicious}


def build_fleet(
    config: ExperimentConfig, partition: Partition, seed_seq: np.random.SeedSequence
):
    """Instantiate all clients with roles, compute power, geometry, and initial
    reliability drawn deterministically from the fleet seed stream."""
    f, a = config.fleet, config.attack
    if partition.n_clients != f.n_clients:
        raise ValueError("partition client count does not match the fleet size")
    rng = np.random.default_rng(seed_seq)
    roles = _resolve_roles(config, rng)
    straggler_set = set(roles["stragglers"])
    dropout_set = set(roles["dropouts"])
    malicious_set = set(roles["malicious"])

    fleet = []
    for cid in range(f.n_clients):
        lo, hi = f.straggler_gamma_range if cid in straggler_set else f.gamma_range
        gamma = float(rng.uniform(lo, hi))
        distance = float(rng.uniform(*f.distance_range_m))
        elevation = float(rng.uniform(*f.elevation_range_deg))
        reliability = int(rng.integers(0, 10))

        if cid in dropout_set:
            profile = BehaviorProfile(DROPOUT, dropout_prob=f.dropout_prob)
        elif cid in malicious_set and a.kind == "targeted":
            profile = BehaviorProfile(
                MALICIOUS_TARGETED, flip_src=a.flip_src, flip_dst=a.flip_dst
            )
        elif cid in malicious_set and a.kind == "untargeted":
            profile = BehaviorProfile(MALICIOUS_UNTARGETED, noise_sigma=a.noise_scale)
        elif cid in straggler_set:
            profile = BehaviorProfile(STRAGGLER)
        else:
            profile = BehaviorProfile(HONEST)

        fleet.append(
            UavClient(
                id=cid,
                shard=partition.client_shards[cid],
                compute=ComputeProfile(gamma, f.kappa_cycles),
                geometry=UavGeometry(distance, elevation),
                profile=profile,
                reliability=reliability,
            )
        )
    return fleet, roles


def _channel_params(config: ExperimentConfig) -> ChannelParams:
    c = config.channel
    return ChannelParams(
        beta0=c.beta0,
        a1=c.a1,
        a2=c.a2,
        a3=c.a3,
        a4=c.a4,
        noise_psd_w_per_hz=c.noise_psd_w_per_hz,
        total_bandwidth_hz=c.total_bandwidth_hz,
        uav_tx_power_w=c.uav_tx_power_w,
        bs_tx_power_w=c.bs_tx_power_w,
        t_ag_s=c.t_ag_s,
    )


def estimate_times(fleet, hyper: TrainingHyper, params: ChannelParams,
                   param_count: int, param_bytes: int) -> dict:
    """Server-side time estimates for the whole fleet, computed before any
    selection with a conservative equal bandwidth share across all clients."""
    share = RoundChannel(params, params.total_bandwidth_hz / len(fleet))
    est = {}
    for client in fleet:
        t_train, t_up = client_times(client, hyper, share, param_count, param_bytes)
        est[client.id] = t_train + t_up
    return est


def _select(strategy, est, fleet_by_id, state, config, sel_seed, divergence):
    """One round of participant selection. Returns (survivors of the straggler
    filter, selected ids, iqr cutoff, deadline seconds or None)."""
    all_ids = sorted(fleet_by_id)
    p_r = config.selection.p_r
    if strategy == PROPOSED:
        survivors, cutoff = defense.iqr_filter(est, config.selection.nu)
        deadline = defense.compute_deadline([est[i] for i in survivors])
        selected = defense.reliability_select(survivors, state)
        return survivors, selected, cutoff, deadline
    if strategy == SPEED:
        return all_ids, baselines.speed_based_selection(est, p_r), None, None
    if strategy in (RANDOM, RANDOM_KMEANS):
        return all_ids, baselines.random_selection(all_ids, p_r, sel_seed), None, None
    if strategy == WEIGHT_DIVERGENCE:
        return all_ids, baselines.weight_divergence_selection(divergence, p_r), None, None
    if strategy == CAPPED:
        counts = {cid: fleet_by_id[cid].participation_count for cid in all_ids}
        cap = config.selection.participation_cap
        return all_ids, baselines.capped_selection(counts, p_r, cap, sel_seed), None, None
    raise ValueError(f"unknown selection strategy {strategy!r}")


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    config.validate()
    t_start = time.perf_counter()
    seeds = derive_seeds(config)
    train, test = prepare_data(config, seeds["data"], seeds["split"])
    partition = make_partition(config, train, seeds["partition"])
    fleet, roles = build_fleet(config, partition, seeds["fleet_seq"])
    fleet_by_id = {c.id: c for c in fleet}
    divergence = {c.id: None for c in fleet}

    params = init_model(
        tuple(config.model.arch), seeds["init"], param_bytes=config.model.param_bytes
    )
    hyper = TrainingHyper(config.model.epochs, config.model.batch_size, config.model.lr)
    chan = _channel_params(config)
    strategy = config.selection.strategy
    state = defense.SelectionState(
        reliability={c.id: c.reliability for c in fleet},
        rho=config.selection.rho,
        rho_max=config.selection.rho_max,
        nu=config.selection.nu,
        min_participants=config.selection.p_r,
    )
    malicious_set = set(roles["malicious"])
    n_clients = config.fleet.n_clients
    round_seqs = seeds["rounds_seq"].spawn(config.run.rounds)
    logs = []

    for r in range(1, config.run.rounds + 1):
        seq = round_seqs[r - 1]
        children = seq.spawn(n_clients + 2)
        sel_seed = _seed_of(children[n_clients])
        defense_seed = _seed_of(children[n_clients + 1])
        state.round_index = r

        est = estimate_times(fleet, hyper, chan, params.param_count, params.param_bytes)
        survivors, selected, cutoff, deadline = _select(
            strategy, est, fleet_by_id, state, config, sel_seed, divergence
        )
        for cid in selected:
            fleet_by_id[cid].participation_count += 1

        outcomes = {}
        if selected:
            share = RoundChannel(chan, chan.total_bandwidth_hz / len(selected))
            sim_deadline = deadline if deadline is not None else math.inf
            for cid in selected:
                outcomes[cid] = simulate_client_round(
                    fleet_by_id[cid], params, sim_deadline, hyper, share,
                    train, _seed_of(children[cid]),
                )

        completed = {cid: oc for cid, oc in outcomes.items() if oc.status == COMPLETED}
        pool = sorted(completed)
        updates_in = [completed[cid].update for cid in pool]

        cluster_sizes, noise_ids, abstained = [], [], False
        keep = set(pool)
        if strategy == PROPOSED and updates_in:
            graph = defense.build_similarity_graph(updates_in)
            clustering = defense.dbscan_cluster(
                graph, config.selection.eps, config.selection.min_pts
            )
            keep, abstained = defense.select_honest_cluster(clustering, graph.ids)
            cluster_sizes = [len(c) for c in clustering.clusters]
            noise_ids = sorted(clustering.noise)
        elif strategy == RANDOM_KMEANS and len(updates_in) >= config.selection.kmeans_clusters:
            keep = baselines.kmeans_defense(
                updates_in, config.selection.kmeans_clusters, defense_seed
            )

        aggregated_ids = sorted(set(pool) & keep)
        flagged = sorted(set(pool) - keep)
        fp = fn = None
        if strategy in (PROPOSED, RANDOM_KMEANS) and pool:
            fp, fn = detection_rates(flagged, malicious_set, pool)

        prev_params = params
        final_updates = [completed[cid].update for cid in aggregated_ids]
        canceled = len(final_updates) < max(1, config.selection.min_updates_to_aggregate)
        if not canceled:
            params = defense.aggregate(params, final_updates)
        else:
            aggregated_ids = []
            log.warning("round %d canceled: %d surviving updates", r, len(final_updates))

        for cid, oc in outcomes.items():
            state.reliability[cid] = defense.update_reliability(
                state.reliability[cid], oc.status, config.selection.penalize_dropouts
            )
            fleet_by_id[cid].reliability = state.reliability[cid]

        if strategy == WEIGHT_DIVERGENCE:
            for cid in pool:
                local = prev_params.values + completed[cid].update.delta
                divergence[cid] = baselines.weight_divergence(local, prev_params.values)

        contributions = []
        for cid, oc in outcomes.items():
            if oc.status == COMPLETED:
                contributions.append(oc.elapsed_s)
            elif deadline is not None:
                contributions.append(deadline)
            elif oc.status == DROPPED_OUT:
                contributions.append(est[cid])
            else:
                contributions.append(oc.elapsed_s)
        round_time = round_duration(contributions, chan.t_ag_s) if contributions else chan.t_ag_s

        report = evaluate(params, test)
        asr_ta = asr_cls = None
        if config.attack.kind == "targeted":
            asr_ta = asr_targeted(report.predictions, test.labels, config.attack.flip_src)
            asr_cls = asr_targeted_classwise(
                report.predictions, test.labels, config.attack.flip_src
            )
        objective = None
        if config.run.log_objective and aggregated_ids:
            objective = 0.0
            for cid in aggregated_ids:
                local = apply_update(prev_params, completed[cid].update.delta)
                objective += evaluate(local, test).global_accuracy

        logs.append(
            RoundLog(
                round_index=r,
                survivors_straggler_filter=list(survivors),
                selected=list(selected),
                aggregated=aggregated_ids,
                filter3_pool=pool,
                flagged=flagged,
                iqr_cutoff_s=cutoff,
                deadline_s=deadline,
                est_times={cid: est[cid] for cid in sorted(est)},
                statuses={cid: outcomes[cid].status for cid in selected},
                elapsed={cid: outcomes[cid].elapsed_s for cid in selected},
                cluster_sizes=cluster_sizes,
                noise_ids=noise_ids,
                abstained=abstained,
                canceled=canceled,
                round_time_s=round_time,
                selection_slots=len(selected),
                dropouts=sum(1 for oc in outcomes.values() if oc.status == DROPPED_OUT),
                global_accuracy=report.global_accuracy,
                per_class_accuracy=report.per_class_accuracy,
                mean_loss=report.mean_loss,
                asr_targeted=asr_ta,
                asr_targeted_classwise=asr_cls,
                fp=fp,
                fn=fn,
                objective=objective,
                reliability_after=dict(sorted(state.reliability.items())),
            )
        )

    result = ExperimentResult(
        config=config_to_dict(config),
        label=config.label,
        strategy=strategy,
        final_params=params,
        round_logs=logs,
        summary=summarize(logs, strategy, config.label),
        roles=roles,
        shard_sizes=[int(s) for s in partition.shard_sizes()],
        duration_s=time.perf_counter() - t_start,
    )
    return result


def _mean_or_none(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def summarize(round_logs, strategy: str, label: str) -> dict:
    """Headline numbers recomputed purely from the round trail."""
    if not round_logs:
        raise ValueError("cannot summarize an empty run")
    accs = [entry.global_accuracy for entry in round_logs]
    tail = round_logs[-min(10, len(round_logs)):]
    try:
        tau_a = average_round_time(round_logs)
    except ValueError:
        tau_a = None
    return {
        "strategy": strategy,
        "label": label,
        "rounds": len(round_logs),
        "final_accuracy": accs[-1],
        "best_accuracy": max(accs),
        "mean_last10_accuracy": float(np.mean([e.global_accuracy for e in tail])),
        "tau_a": tau_a,
        "chi_d": dropout_ratio(round_logs),
        "mean_fp": _mean_or_none(e.fp for e in round_logs),
        "mean_fn": _mean_or_none(e.fn for e in round_logs),
        "final_asr_targeted": round_logs[-1].asr_targeted,
        "mean_last10_asr_targeted": _mean_or_none(e.asr_targeted for e in tail),
        "mean_last10_asr_targeted_classwise": _mean_or_none(
            e.asr_targeted_classwise for e in tail
        ),
        "canceled_rounds": sum(1 for e in round_logs if e.canceled),
        "total_dropouts": sum(e.dropouts for e in round_logs),
        "total_selection_slots": sum(e.selection_slots for e in round_logs),
    }


def run_sweep(base_config: ExperimentConfig, axis: str, values) -> list:
    """Independent runs sharing the master seed, one per value of one config
    field addressed as section.field."""
    results = []
    for value in values:
        cfg = apply_overrides(base_config, [f"{axis}={json.dumps(value)}"])
        cfg.run.label = f"{cfg.selection.strategy} {axis}={value}"
        results.append((value, run_experiment(cfg)))
    return results
