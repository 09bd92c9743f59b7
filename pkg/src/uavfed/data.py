"""Dataset loading, synthetic data generation, splitting, and client partitioning."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Raised when an IDX file does not match the expected binary layout."""


@dataclass
class LabeledDataset:
    """Feature matrix with integer class labels.

    features: (n_samples, dim) float array.
    labels: (n_samples,) integer array with values in [0, num_classes).
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if len(self.features) != len(self.labels):
            raise ValueError(
                f"feature rows ({len(self.features)}) != labels ({len(self.labels)})"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        """View of the dataset restricted to the given sample indices."""
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes)


@dataclass
class Partition:
    """Per-client sample-index lists into a parent dataset."""

    client_shards: list

    def __post_init__(self):
        self.client_shards = [np.asarray(s, dtype=np.int64) for s in self.client_shards]

    @property
    def n_clients(self) -> int:
        return len(self.client_shards)

    def shard_sizes(self) -> list:
        return [len(s) for s in self.client_shards]


def _read_idx(path, expected_magic, kind):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IdxFormatError(f"{kind} file {path}: truncated before magic number")
    (magic,) = struct.unpack(">i", raw[:4])
    if magic != expected_magic:
        raise IdxFormatError(
            f"{kind} file {path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise IdxFormatError(f"{kind} file {path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}i", raw[4:header_len])
    count = dims[0]
    item_size = int(np.prod(dims[1:], dtype=np.int64)) if ndim > 1 else 1
    expected = header_len + count * item_size
    if len(raw) < expected:
        raise IdxFormatError(
            f"{kind} file {path}: truncated payload, need {expected} bytes, have {len(raw)}"
        )
    data = np.frombuffer(raw, dtype=np.uint8, count=count * item_size, offset=header_len)
    return data.reshape((count, item_size)) if ndim > 1 else data, count


def load_idx_dataset(images_path, labels_path) -> LabeledDataset:
    """Read an IDX image/label file pair (the MNIST container format).

    Pixel bytes are scaled to [0, 1]; labels are taken verbatim with
    num_classes fixed at 10.
    """
    images, n_images = _read_idx(images_path, IDX_IMAGE_MAGIC, "image")
    labels, n_labels = _read_idx(labels_path, IDX_LABEL_MAGIC, "label")
    if n_images != n_labels:
        raise IdxFormatError(
            f"image count {n_images} does not match label count {n_labels}"
        )
    features = images.astype(np.float64) / 255.0
    if n_images == 0:
        features = features.reshape(0, images.shape[1] if images.ndim > 1 else 0)
    return LabeledDataset(features, labels.astype(np.int64), num_classes=10)


def generate_synthetic_dataset(
    num_classes: int,
    per_class: int,
    dim: int,
    separation: float,
    seed: int,
    components: int = 1,
    component_spread: float = 0.0,
    feature_noise: float = 1.0,
    class_scale: dict | None = None,
) -> LabeledDataset:
    """Gaussian class blobs with a guaranteed minimum distance between class means.

    Class means are drawn isotropically and rescaled so the smallest pairwise
    distance equals ``separation`` exactly. Each class may optionally be a
    mixture of ``components`` sub-clusters spread by ``component_spread``, and
    ``class_scale`` maps class index to a multiplier applied to that class
    mean (classes scaled away from the origin become easier to separate).
    """
    if num_classes < 2 or per_class < 1 or dim < 1 or separation <= 0:
        raise ValueError("need num_classes >= 2, per_class >= 1, dim >= 1, separation > 0")
    if components < 1:
        raise ValueError("components must be >= 1")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(dim)
    means = rng.normal(0.0, 1.0, (num_classes, dim)) * scale
    dists = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)
    min_dist = dists[~np.eye(num_classes, dtype=bool)].min()
    means *= separation / min_dist
    if class_scale:
        for cls, factor in class_scale.items():
            means[int(cls)] *= float(factor)
    comp_means = means[:, None, :] + rng.normal(
        0.0, 1.0, (num_classes, components, dim)
    ) * (component_spread * scale)

    n = num_classes * per_class
    labels = np.repeat(np.arange(num_classes), per_class)
    rng.shuffle(labels)
    comp_of = rng.integers(0, components, n)
    features = comp_means[labels, comp_of] + rng.normal(0.0, 1.0, (n, dim)) * (
        feature_noise * scale
    )
    return LabeledDataset(features, labels, num_classes)


def split_train_test(ds: LabeledDataset, train_fraction: float, seed: int):
    """Disjoint, exhaustive shuffle split; the train side gets the floor share rounded up."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    n_train = max(1, int(round(len(ds) * train_fraction)))
    return ds.subset(order[:n_train]), ds.subset(order[n_train:])


def partition_distribution1(
    ds: LabeledDataset,
    n_clients: int,
    k_percent: float,
    per_client_cap: int,
    seed: int,
    size_concentration: float = 4.0,
    min_shard: int = 0,
) -> Partition:
    """Size-unbalanced random dispersal of k% of the data, equal split of the rest.

    The k% portion is dispersed at random: client size shares are drawn from a
    symmetric Dirichlet with concentration ``size_concentration`` (lower values
    give a heavier size imbalance) and samples are assigned class-blind. The
    remaining (100 - k)% is dealt round-robin so every client holds a floor of
    common data. Shards over ``per_client_cap`` are trimmed by uniform discard.
    ``min_shard`` > 0 redraws the size shares until every shard reaches that
    many samples (a standard guard against degenerate tiny shards).
    """
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if not 0.0 <= k_percent <= 100.0:
        raise ValueError("k_percent must be in [0, 100]")
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(ds))
    k_size = int(round(len(ds) * k_percent / 100.0))
    rand_part, equal_part = idx[:k_size], idx[k_size:]
    equal_floor = len(equal_part) // n_clients
    if per_client_cap < equal_floor:
        raise ValueError(
            f"per_client_cap {per_client_cap} is below the equal-share minimum {equal_floor}"
        )

    counts = None
    for _ in range(200):
        props = rng.dirichlet(np.full(n_clients, float(size_concentration)))
        trial = np.floor(props * k_size).astype(np.int64)
        trial[np.argsort(-props)[: k_size - trial.sum()]] += 1
        counts = trial
        if trial.min() + equal_floor >= min_shard:
            break

    shards = []
    offset = 0
    for c in counts:
        shards.append(list(rand_part[offset : offset + c]))
        offset += c
    for i, s in enumerate(rng.permutation(equal_part)):
        shards[i % n_clients].append(s)

    out = []
    for s in shards:
        s = np.array(s, dtype=np.int64)
        if len(s) > per_client_cap:
            s = rng.choice(s, per_client_cap, replace=False)
        out.append(np.sort(s))
    return Partition(out)


def partition_distribution2(
    ds: LabeledDataset, n_clients: int, classes_per_client: int, seed: int
) -> Partition:
    """Class-restricted shards: every client sees at most N_c distinct labels."""
    if not 1 <= classes_per_client <= ds.num_classes:
        raise ValueError("classes_per_client must be in [1, num_classes]")
    if n_clients * classes_per_client < ds.num_classes:
        raise ValueError(
            "infeasible class coverage: n_clients * classes_per_client "
            f"= {n_clients * classes_per_client} < {ds.num_classes} classes"
        )
    rng = np.random.default_rng(seed)

    held = [set() for _ in range(n_clients)]
    client_order = rng.permutation(n_clients)
    for j, cls in enumerate(rng.permutation(ds.num_classes)):
        held[client_order[j % n_clients]].add(int(cls))
    for i in range(n_clients):
        missing = classes_per_client - len(held[i])
        if missing > 0:
            pool = np.array(sorted(set(range(ds.num_classes)) - held[i]))
            held[i].update(int(c) for c in rng.choice(pool, missing, replace=False))

    shards = [[] for _ in range(n_clients)]
    for cls in range(ds.num_classes):
        holders = [i for i in range(n_clients) if cls in held[i]]
        samples = rng.permutation(np.flatnonzero(ds.labels == cls))
        for chunk, holder in zip(np.array_split(samples, len(holders)), holders):
            shards[holder].extend(chunk.tolist())
    return Partition([np.sort(np.array(s, dtype=np.int64)) for s in shards])


def class_histogram(ds: LabeledDataset, partition: Partition) -> np.ndarray:
    """(n_clients, num_classes) matrix of per-shard label counts."""
    hist = np.zeros((partition.n_clients, ds.num_classes), dtype=np.int64)
    for i, shard in enumerate(partition.client_shards):
        if len(shard):
            hist[i] = np.bincount(ds.labels[shard], minlength=ds.num_classes)
    return hist
