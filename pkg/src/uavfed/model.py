"""Small feed-forward classifier trained from scratch with mini-batch SGD.

Parameters live in a single flat vector so updates can be differenced,
clustered, and aggregated as plain arrays. Layout: all weight matrices in
layer order, then all bias vectors in layer order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TrainingFailure(RuntimeError):
    """Raised when local training produces a non-finite loss."""


@dataclass
class ModelParams:
    """Flat parameter vector plus the layer widths needed to unflatten it."""

    values: np.ndarray
    arch: tuple
    param_bytes: int = 4

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.arch = tuple(int(w) for w in self.arch)
        if self.values.shape != (param_count(self.arch),):
            raise ValueError(
                f"flat vector length {self.values.size} does not match arch {self.arch}"
            )

    @property
    def param_count(self) -> int:
        return self.values.size

    def copy(self) -> "ModelParams":
        return ModelParams(self.values.copy(), self.arch, self.param_bytes)


@dataclass
class WeightUpdate:
    """Difference between a locally trained model and the global it started from."""

    delta: np.ndarray
    owner_id: int
    sample_count: int

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64)
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")


@dataclass
class EvalReport:
    global_accuracy: float
    per_class_accuracy: dict
    mean_loss: float
    predictions: np.ndarray = field(repr=False)


def param_count(arch) -> int:
    """Total parameter count V for a dense net with the given layer widths."""
    arch = tuple(arch)
    if len(arch) < 2 or any(w < 1 for w in arch):
        raise ValueError(f"arch needs >= 2 positive layer widths, got {arch}")
    weights = sum(a * b for a, b in zip(arch[:-1], arch[1:]))
    biases = sum(arch[1:])
    return weights + biases


def init_model(arch, seed: int, param_bytes: int = 4) -> ModelParams:
    """Glorot-uniform weights, zero biases, deterministic in the seed."""
    arch = tuple(int(w) for w in arch)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    flat = np.concatenate([w.ravel() for w in weights] + [b.ravel() for b in biases])
    return ModelParams(flat, arch, param_bytes)


def unflatten(values: np.ndarray, arch):
    """Split a flat vector into (weights, biases) lists matching the arch."""
    arch = tuple(arch)
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        weights.append(values[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out))
        offset += fan_in * fan_out
    for fan_out in arch[1:]:
        biases.append(values[offset : offset + fan_out])
        offset += fan_out
    return weights, biases


def _forward(weights, biases, x):
    """Hidden activations (ReLU) and output logits."""
    hidden = []
    h = x
    for w, b in zip(weights[:-1], biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        hidden.append(h)
    logits = h @ weights[-1] + biases[-1]
    return hidden, logits


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(params: ModelParams, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch and its gradient as a flat vector."""
    weights, biases = unflatten(params.values, params.arch)
    hidden, logits = _forward(weights, biases, x)
    probs = _softmax(logits)
    n = len(y)
    loss = -np.mean(np.log(probs[np.arange(n), y] + 1e-300))

    grad_w = [None] * len(weights)
    grad_b = [None] * len(biases)
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    activations = [x] + hidden
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = activations[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ weights[layer].T
            delta[activations[layer] <= 0.0] = 0.0
    flat = np.concatenate([g.ravel() for g in grad_w] + [g.ravel() for g in grad_b])
    return loss, flat


def local_update(
    global_params: ModelParams,
    shard_x: np.ndarray,
    shard_y: np.ndarray,
    epochs: int,
    batch_size: int,
    lr: float,
    seed: int,
    owner_id: int = -1,
) -> WeightUpdate:
    """T_e epochs of mini-batch SGD from the global model; returns the delta.

    The global parameters are not mutated. Batch order reshuffles every epoch
    from the given seed, so the result is deterministic per (client, round).
    """
    if len(shard_y) == 0:
        raise ValueError("empty shard")
    if lr < 0 or epochs < 1 or batch_size < 1:
        raise ValueError("need lr >= 0, epochs >= 1, batch_size >= 1")
    rng = np.random.default_rng(seed)
    work = global_params.copy()
    n = len(shard_y)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            loss, grad = loss_and_grad(work, shard_x[batch], shard_y[batch])
            if not np.isfinite(loss):
                raise TrainingFailure(f"non-finite loss {loss!r} during local update")
            work.values -= lr * grad
    return WeightUpdate(work.values - global_params.values, owner_id, n)


def apply_update(params: ModelParams, delta: np.ndarray) -> ModelParams:
    """Pure elementwise addition of a flat delta."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != params.values.shape:
        raise ValueError("delta length does not match parameter vector")
    return ModelParams(params.values + delta, params.arch, params.param_bytes)


def predict(params: ModelParams, x: np.ndarray) -> np.ndarray:
    weights, biases = unflatten(params.values, params.arch)
    _, logits = _forward(weights, biases, x)
    return logits.argmax(axis=1)


def evaluate(params: ModelParams, test) -> EvalReport:
    """Accuracy, per-class accuracy (absent classes omitted), loss, predictions."""
    if len(test) == 0:
        raise ValueError("empty test set")
    weights, biases = unflatten(params.values, params.arch)
    _, logits = _forward(weights, biases, test.features)
    probs = _softmax(logits)
    preds = logits.argmax(axis=1)
    loss = -np.mean(np.log(probs[np.arange(len(test)), test.labels] + 1e-300))
    correct = preds == test.labels
    per_class = {}
    for cls in range(test.num_classes):
        mask = test.labels == cls
        if mask.any():
            per_class[cls] = float(correct[mask].mean())
    return EvalReport(float(correct.mean()), per_class, float(loss), preds)


CHECKPOINT_MAGIC = "uavfed-checkpoint 1"


def save_checkpoint(params: ModelParams, path):
    """Plain-text header plus little-endian float64 payload, diff-friendly."""
    header = (
        f"{CHECKPOINT_MAGIC}\n"
        f"arch: {','.join(str(w) for w in params.arch)}\n"
        f"param_count: {params.param_count}\n"
        f"param_bytes: {params.param_bytes}\n"
        "---\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(params.values.astype("<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    marker = b"---\n"
    cut = raw.find(marker)
    if cut < 0 or not raw.startswith(CHECKPOINT_MAGIC.encode("ascii")):
        raise ValueError(f"not a model checkpoint: {path}")
    fields = {}
    for line in raw[:cut].decode("ascii").splitlines()[1:]:
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    arch = tuple(int(w) for w in fields["arch"].split(","))
    values = np.frombuffer(raw[cut + len(marker) :], dtype="<f8").copy()
    params = ModelParams(values, arch, int(fields.get("param_bytes", 4)))
    if params.param_count != int(fields["param_count"]):
        raise ValueError("checkpoint payload length does not match its header")
    return params
