"""Simulated UAV participants: behavior profiles, attack payloads, and the
per-round client execution that produces what the server observes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelParams, ComputeProfile, UavGeometry, training_time, uplink_rate, upload_time, channel_gain, path_loss_exponent
from .data import LabeledDataset
from .model import ModelParams, TrainingFailure, WeightUpdate, local_update

HONEST = "honest"
STRAGGLER = "straggler"
DROPOUT = "dropout"
MALICIOUS_TARGETED = "malicious_targeted"
MALICIOUS_UNTARGETED = "malicious_untargeted"

PROFILE_KINDS = (HONEST, STRAGGLER, DROPOUT, MALICIOUS_TARGETED, MALICIOUS_UNTARGETED)

COMPLETED = "completed"
MISSED_DEADLINE = "missed_deadline"
DROPPED_OUT = "dropped_out"
NOT_SELECTED = "not_selected"


@dataclass
class BehaviorProfile:
    """What a client does when selected. Kind-specific fields are only
    meaningful for their kind and must be absent elsewhere."""

    kind: str
    dropout_prob: Optional[float] = None
    noise_sigma: Optional[float] = None
    flip_src: Optional[int] = None
    flip_dst: Optional[int] = None

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if (self.dropout_prob is not None) != (self.kind == DROPOUT):
            raise ValueError("dropout_prob is required for dropout profiles only")
        if (self.noise_sigma is not None) != (self.kind == MALICIOUS_UNTARGETED):
            raise ValueError("noise_sigma is required for untargeted attackers only")
        if self.kind == MALICIOUS_TARGETED:
            if self.flip_src is None or self.flip_dst is None:
                raise ValueError("targeted attackers need both flip_src and flip_dst")
        elif self.flip_src is not None or self.flip_dst is not None:
            raise ValueError("flip_src/flip_dst are only valid for targeted attackers")
        if self.kind == DROPOUT and not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must be in [0, 1]")
        if self.kind == MALICIOUS_UNTARGETED and self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass
class UavClient:
    id: int
    shard: np.ndarray
    compute: ComputeProfile
    geometry: UavGeometry
    profile: BehaviorProfile
    reliability: int = 0
    participation_count: int = 0

    @property
    def sample_count(self) -> int:
        return len(self.shard)


@dataclass
class ClientRoundOutcome:
    status: str
    update: Optional[WeightUpdate]
    elapsed_s: float
    sample_count: int
    diagnostic: Optional[str] = None

    def __post_init__(self):
        has_update = self.update is not None
        if has_update != (self.status in (COMPLETED, MISSED_DEADLINE)):
            raise ValueError(f"update presence inconsistent with status {self.status}")


@dataclass
class RoundChannel:
    """Channel constants plus the bandwidth share allotted this round."""

    params: ChannelParams
    bandwidth_hz: float


@dataclass
class TrainingHyper:
    epochs: int
    batch_size: int
    lr: float


def flip_labels(shard: LabeledDataset, src: int, dst: int) -> LabeledDataset:
    """Relabel every src sample as dst. Features are shared, labels copied."""
    if src == dst:
        raise ValueError("flip source and destination must differ")
    for label in (src, dst):
        if not 0 <= label < shard.num_classes:
            raise ValueError(f"label {label} outside [0, {shard.num_classes})")
    labels = shard.labels.copy()
    labels[labels == src] = dst
    return LabeledDataset(shard.features, labels, shard.num_classes)


def poison_update(update: WeightUpdate, sigma: float, seed: int) -> WeightUpdate:
    """Add iid Gaussian(0, sigma^2) noise to every coordinate of the delta."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    noisy = update.delta + rng.normal(0.0, sigma, update.delta.shape)
    return WeightUpdate(noisy, update.owner_id, update.sample_count)


def client_times(client: UavClient, hyper: TrainingHyper, round_channel: RoundChannel,
                 param_count: int, param_bytes: int):
    """(training seconds, upload seconds) for this client under the round's bandwidth share."""
    t_train = training_time(
        hyper.epochs, client.compute.kappa_cycles, client.sample_count, client.compute.gamma_hz
    )
    alpha = path_loss_exponent(client.geometry.elevation_deg, round_channel.params)
    h = channel_gain(client.geometry.distance_m, alpha, round_channel.params.beta0)
    rate = uplink_rate(
        round_channel.bandwidth_hz,
        round_channel.params.uav_tx_power_w,
        h,
        round_channel.params.noise_psd_w_per_hz,
    )
    t_up = upload_time(param_count, param_bytes, rate)
    return t_train, t_up


def simulate_client_round(
    client: UavClient,
    global_params: ModelParams,
    deadline_s: float,
    hyper: TrainingHyper,
    round_channel: RoundChannel,
    parent_dataset: LabeledDataset,
    rng_seed: int,
) -> ClientRoundOutcome:
    """One client's round: train on its shard (with any attack applied),
    then report completion against the deadline.

    Dropout-prone clients fail silently with their configured probability
    before anything is uploaded; the server sees nothing until the deadline.
    """
    if deadline_s <= 0:
        raise ValueError("deadline must be positive")
    rng = np.random.default_rng(rng_seed)
    dropout_draw = rng.random()
    train_seed = int(rng.integers(0, 2**63 - 1))
    poison_seed = int(rng.integers(0, 2**63 - 1))

    t_train, t_up = client_times(
        client, hyper, round_channel, global_params.param_count, global_params.param_bytes
    )
    elapsed = t_train + t_up

    if client.profile.kind == DROPOUT and dropout_draw < client.profile.dropout_prob:
        return ClientRoundOutcome(DROPPED_OUT, None, elapsed, client.sample_count)

    shard_view = parent_dataset.subset(client.shard)
    if client.profile.kind == MALICIOUS_TARGETED:
        shard_view = flip_labels(shard_view, client.profile.flip_src, client.profile.flip_dst)

    try:
        update = local_update(
            global_params,
            shard_view.features,
            shard_view.labels,
            hyper.epochs,
            hyper.batch_size,
            hyper.lr,
            train_seed,
            owner_id=client.id,
        )
    except TrainingFailure as exc:
        return ClientRoundOutcome(
            DROPPED_OUT, None, elapsed, client.sample_count, diagnostic=str(exc)
        )

    if client.profile.kind == MALICIOUS_UNTARGETED:
        rms = float(np.sqrt(np.mean(update.delta**2)))
        update = poison_update(update, client.profile.noise_sigma * rms, poison_seed)

    status = COMPLETED if elapsed <= deadline_s else MISSED_DEADLINE
    return ClientRoundOutcome(status, update, elapsed, client.sample_count)
