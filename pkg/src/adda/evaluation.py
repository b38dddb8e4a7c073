"""Linear classification on frozen backbone features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncoderParams, forward
from .errors import ConfigError, ParameterError, ShapeError
from .numerics import RngStream, matmul

VAL_FRACTION = 0.2


@dataclass
class ProbeModel:
    W: np.ndarray
    b: np.ndarray
    mean: np.ndarray  # feature standardization fitted on the training split
    scale: np.ndarray

    def logits(self, features):
        x = (np.asarray(features, np.float32) - self.mean) / self.scale
        return matmul(x, self.W) + self.b

    def predict(self, features):
        return np.argmax(self.logits(features), axis=1)


@dataclass
class ProbeResult:
    model: ProbeModel
    top1: float
    train_loss: list  # mean training cross-entropy after each epoch


def extract_features(params: EncoderParams, dataset, chunk=256):
    """Backbone features ``h`` of the un-augmented images, with ``params`` untouched."""
    flat = dataset.flat()
    if flat.shape[1] != params.W1.shape[0]:
        raise ConfigError(
            f"dataset images flatten to {flat.shape[1]} values but the encoder expects {params.W1.shape[0]}"
        )
    feats = [forward(params, flat[i:i + chunk])[0] for i in range(0, len(flat), chunk)]
    return np.concatenate(feats).astype(np.float32), dataset.labels.copy()


def top1_accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ShapeError(f"{predictions.shape} predictions vs {labels.shape} labels")
    if labels.size == 0:
        raise ShapeError("no labels to score")
    return float(np.mean(predictions == labels))


def split_indices(m, seed):
    """Fixed 80/20 train/validation split."""
    perm = RngStream(seed, 0).spawn("probe-split").permutation(m)
    n_val = max(1, int(round(m * VAL_FRACTION)))
    return perm[n_val:], perm[:n_val]


def _cross_entropy(logits, labels):
    top = logits.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.sum(np.exp(logits - top), axis=1))
    probs = np.exp(logits - lse[:, None])
    return float(np.mean(lse - logits[np.arange(len(labels)), labels])), probs


def linear_probe(features, labels, probe_epochs=50, probe_lr=0.1, seed=0, batch_size=64) -> ProbeResult:
    """Softmax regression by mini-batch gradient descent; top-1 is on the held-out split."""
    features = np.asarray(features, np.float32)
    labels = np.asarray(labels, np.int64)
    if len(features) != len(labels):
        raise ShapeError(f"{len(features)} feature rows vs {len(labels)} labels")
    if probe_epochs < 1:
        raise ParameterError(f"probe_epochs must be >= 1, got {probe_epochs}")
    if probe_lr < 0 or batch_size < 1:
        raise ParameterError("probe_lr must be >= 0 and batch_size >= 1")
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ParameterError("linear probe needs at least two classes")
    num_classes = int(labels.max()) + 1
    train, val = split_indices(len(labels), seed)

    mean = features[train].mean(axis=0)
    scale = features[train].std(axis=0)
    scale = np.where(scale > 1e-6, scale, 1.0).astype(np.float32)
    x = (features - mean) / scale
    W = np.zeros((features.shape[1], num_classes), np.float32)
    b = np.zeros(num_classes, np.float32)
    onehot = np.eye(num_classes, dtype=np.float32)[labels]

    rng = RngStream(seed, 0).spawn("probe-batches")
    history = []
    for epoch in range(probe_epochs):
        order = train[rng.permutation(len(train))]
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            _, probs = _cross_entropy(matmul(x[idx], W) + b, labels[idx])
            g = (probs.astype(np.float32) - onehot[idx]) / len(idx)
            W -= np.float32(probe_lr) * matmul(x[idx].T, g)
            b -= np.float32(probe_lr) * g.sum(axis=0)
        history.append(_cross_entropy(matmul(x[train], W) + b, labels[train])[0])

    model = ProbeModel(W, b, mean, scale)
    return ProbeResult(model, top1_accuracy(model.predict(features[val]), labels[val]), history)
