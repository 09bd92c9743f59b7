"""Experiment configuration: every constant of the simulation in one
serializable tree, with JSON round-tripping and dotted-path overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .baselines import BASELINE_KINDS, PROPOSED


@dataclass
class DataConfig:
    source: str = "synthetic"          # "synthetic" or "idx"
    idx_images: str | None = None
    idx_labels: str | None = None
    num_classes: int = 10
    per_class: int = 1000
    dim: int = 784
    separation: float = 0.28
    components: int = 1
    component_spread: float = 0.0
    feature_noise: float = 1.0
    class_scale: dict = field(default_factory=dict)
    train_fraction: float = 0.8
    distribution: int = 1
    k_percent: float = 80.0
    classes_per_client: int = 2
    per_client_cap: int = 1300
    size_concentration: float = 4.0
    min_shard: int = 0
    data_seed: int | None = None       # None: derived from the master seed
    partition_seed: int | None = None


@dataclass
class FleetConfig:
    n_clients: int = 50
    gamma_range: tuple = (1e6, 1e8)
    straggler_gamma_range: tuple = (1e5, 1e6)
    kappa_cycles: float = 7e4
    n_stragglers: int = 0
    straggler_ids: list | None = None
    n_dropout: int = 0
    dropout_ids: list | None = None
    dropout_prob: float = 1.0
    distance_range_m: tuple = (100.0, 1000.0)
    elevation_range_deg: tuple = (30.0, 80.0)


@dataclass
class AttackConfig:
    kind: str = "none"                 # "none", "targeted", "untargeted"
    fraction: float = 0.2
    malicious_ids: list | None = None
    flip_src: int = 5
    flip_dst: int = 3
    noise_scale: float = 300.0         # sigma as a multiple of the update RMS


@dataclass
class ModelConfig:
    arch: list = field(default_factory=lambda: [784, 128, 10])
    epochs: int = 10
    batch_size: int = 64
    lr: float = 0.01
    param_bytes: int = 4


@dataclass
class ChannelConfig:
    beta0: float = 1e-4
    a1: float = 2.0
    a2: float = 2.0
    a3: float = 0.31
    a4: float = 9.61
    noise_psd_w_per_hz: float = 1e-20
    total_bandwidth_hz: float = 10e6
    uav_tx_power_w: float = 0.28
    bs_tx_power_w: float = 10.0
    t_ag_s: float = 0.5


@dataclass
class SelectionConfig:
    strategy: str = PROPOSED
    p_r: int = 5
    rho: int = -5
    rho_max: int = 10
    nu: float = 1.5
    eps: float = 0.02
    min_pts: int = 2
    penalize_dropouts: bool = False
    participation_cap: int = 20
    kmeans_clusters: int = 2
    min_updates_to_aggregate: int = 1


@dataclass
class RunConfig:
    rounds: int = 200
    master_seed: int = 0
    label: str | None = None           # defaults to the strategy name
    log_objective: bool = True         # per-round sum of aggregated-client accuracies


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    fleet: FleetConfig = field(default_factory=FleetConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def validate(self):
        problems = []
        d, f, a, s = self.data, self.fleet, self.attack, self.selection
        if d.source not in ("synthetic", "idx"):
            problems.append(f"data.source: unknown source {d.source!r}")
        if d.source == "idx" and (not d.idx_images or not d.idx_labels):
            problems.append("data.idx_images/idx_labels: required for the idx source")
        if d.distribution not in (1, 2):
            problems.append(f"data.distribution: must be 1 or 2, got {d.distribution}")
        if not 0.0 <= d.k_percent <= 100.0:
            problems.append("data.k_percent: must lie in [0, 100]")
        if not 0.0 < d.train_fraction < 1.0:
            problems.append("data.train_fraction: must lie in (0, 1)")
        if f.n_clients < 1:
            problems.append("fleet.n_clients: must be >= 1")
        if not 0.0 <= f.dropout_prob <= 1.0:
            problems.append("fleet.dropout_prob: must lie in [0, 1]")
        if a.kind not in ("none", "targeted", "untargeted"):
            problems.append(f"attack.kind: unknown kind {a.kind!r}")
        if a.kind != "none":
            n_mal = len(a.malicious_ids) if a.malicious_ids is not None else round(
                a.fraction * f.n_clients
            )
            if n_mal >= 0.5 * f.n_clients:
                problems.append("attack: attackers must stay below half the fleet")
        if s.strategy not in (PROPOSED,) + BASELINE_KINDS:
            problems.append(f"selection.strategy: unknown strategy {s.strategy!r}")
        if s.rho >= s.rho_max:
            problems.append("selection.rho: must be strictly below rho_max")
        if s.p_r < 1 or s.p_r > f.n_clients:
            problems.append("selection.p_r: must lie in [1, n_clients]")
        if s.eps <= 0 or s.nu <= 0:
            problems.append("selection.eps/nu: must be positive")
        if self.run.rounds < 1:
            problems.append("run.rounds: must be >= 1")
        explicit = [f.straggler_ids, f.dropout_ids, a.malicious_ids]
        named = [set(ids) for ids in explicit if ids]
        roles = set().union(*named) if named else set()
        if any(cid < 0 or cid >= f.n_clients for cid in roles):
            problems.append("explicit role ids must lie in [0, n_clients)")
        if sum(len(s_) for s_ in named) != len(roles):
            problems.append("explicit role id lists must not overlap")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    @property
    def label(self) -> str:
        return self.run.label or self.selection.strategy


class ConfigError(ValueError):
    """Invalid experiment configuration, with the offending field paths."""


_SECTIONS = {
    "data": DataConfig,
    "fleet": FleetConfig,
    "attack": AttackConfig,
    "model": ModelConfig,
    "channel": ChannelConfig,
    "selection": SelectionConfig,
    "run": RunConfig,
}


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(tree: dict) -> ExperimentConfig:
    kwargs = {}
    unknown = set(tree) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for section, cls in _SECTIONS.items():
        block = tree.get(section, {})
        names = {f.name for f in dataclasses.fields(cls)}
        bad = set(block) - names
        if bad:
            raise ConfigError(f"unknown fields in [{section}]: {sorted(bad)}")
        coerced = {}
        for key, value in block.items():
            if isinstance(value, list) and isinstance(getattr(cls(), key), tuple):
                value = tuple(value)
            coerced[key] = value
        kwargs[section] = cls(**coerced)
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        tree = json.load(fh)
    return config_from_dict(tree)


def save_config(cfg: ExperimentConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_override_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply `section.field=value` strings; values parse as JSON when possible."""
    tree = config_to_dict(cfg)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        parts = key.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {key!r} must be section.field")
        section, fname = parts
        if section not in tree:
            raise ConfigError(f"unknown config section {section!r}")
        if fname not in tree[section]:
            raise ConfigError(f"unknown field {fname!r} in section {section!r}")
        tree[section][fname] = _parse_override_value(raw.strip())
    return config_from_dict(tree)
