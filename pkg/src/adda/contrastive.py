"""InfoNCE against a FIFO queue of key embeddings, pretext accuracy and weighted loss.

Similarities and the log-sum-exp are evaluated in float64 from the float32
embeddings; the gradient handed back to the encoder is float32.  Gradients
flow through the query embedding only: positives and queue entries come
from the momentum encoder and are treated as constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError, ShapeError, UndefinedAccuracyError
from .numerics import matmul

UNIT_TOL = 1e-5


def _check_unit_rows(m, what):
    norms = np.sqrt(np.sum(np.asarray(m, np.float64) ** 2, axis=-1))
    if norms.size and np.max(np.abs(norms - 1.0)) > UNIT_TOL:
        raise DomainError(f"{what} must be unit vectors (max norm error {np.max(np.abs(norms - 1.0)):.2e})")


class Queue:
    """Fixed-capacity ring buffer of unit-norm keys; oldest entries are evicted first."""

    def __init__(self, capacity, dim):
        if capacity < 0:
            raise ParameterError(f"queue capacity must be non-negative, got {capacity}")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self.entries = np.zeros((self.capacity, self.dim), np.float32)
        self.head = 0
        self.filled = 0

    def __repr__(self):
        return f"Queue(capacity={self.capacity}, dim={self.dim}, filled={self.filled}, head={self.head})"

    def __eq__(self, other):
        return (
            isinstance(other, Queue)
            and (self.capacity, self.dim, self.head, self.filled) == (other.capacity, other.dim, other.head, other.filled)
            and np.array_equal(self.entries, other.entries)
        )

    def copy(self):
        q = Queue(self.capacity, self.dim)
        q.entries[:] = self.entries
        q.head, q.filled = self.head, self.filled
        return q

    def keys(self) -> np.ndarray:
        """Filled entries in storage order."""
        return self.entries[: self.filled]

    def oldest_first(self) -> np.ndarray:
        if self.filled < self.capacity:
            return self.entries[: self.filled].copy()
        return np.roll(self.entries, -self.head, axis=0)

    def push(self, keys):
        keys = np.asarray(keys, dtype=np.float32)
        if keys.ndim != 2 or keys.shape[1] != self.dim:
            raise ShapeError(f"keys of shape {keys.shape} do not fit a queue of dim {self.dim}")
        _check_unit_rows(keys, "queued keys")
        n = len(keys)
        if self.capacity == 0 or n == 0:
            return self
        if n > self.capacity:
            self.head = (self.head + n - self.capacity) % self.capacity
            keys = keys[n - self.capacity:]
        idx = (self.head + np.arange(len(keys))) % self.capacity
        self.entries[idx] = keys
        self.head = (self.head + len(keys)) % self.capacity
        self.filled = min(self.capacity, self.filled + n)
        return self


def enqueue(queue: Queue, keys) -> Queue:
    """Return a copy of ``queue`` with ``keys`` appended in order."""
    return queue.copy().push(keys)


@dataclass
class ContrastiveOutcome:
    loss: float
    logits: np.ndarray  # logits[0] is the positive
    correct: bool
    grad_z: np.ndarray
    grad_pos: np.ndarray


def _log_softmax_parts(logits):
    top = logits.max(axis=-1, keepdims=True)
    lse = top + np.log(np.sum(np.exp(logits - top), axis=-1, keepdims=True))
    return lse, np.exp(logits - lse)


def infonce(z, z_pos, queue: Queue, tau) -> ContrastiveOutcome:
    if tau <= 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    z64 = np.asarray(z, np.float64)
    pos64 = np.asarray(z_pos, np.float64)
    negs = queue.keys().astype(np.float64)
    logits = np.concatenate([[z64 @ pos64], negs @ z64]) / tau
    lse, probs = _log_softmax_parts(logits)
    loss = float(lse[0] - logits[0])
    grad_z = ((probs[0] - 1.0) * pos64 + probs[1:] @ negs) / tau
    grad_pos = (probs[0] - 1.0) * z64 / tau
    correct = bool(len(negs) == 0 or logits[0] > logits[1:].max())
    return ContrastiveOutcome(loss, logits, correct, grad_z.astype(np.float32), grad_pos.astype(np.float32))


def infonce_batch(z, z_pos, queue: Queue, tau):
    """Row-wise InfoNCE.  Returns ``(losses, correct, grad_z)`` for a batch of queries."""
    if tau <= 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    z64 = np.asarray(z, np.float64)
    pos64 = np.asarray(z_pos, np.float64)
    if z64.shape != pos64.shape:
        raise ShapeError(f"query {z64.shape} and positive {pos64.shape} shapes differ")
    negs = queue.keys().astype(np.float64)
    l_pos = np.sum(z64 * pos64, axis=1, keepdims=True)
    l_neg = matmul(z64, negs.T) if len(negs) else np.zeros((len(z64), 0))
    logits = np.concatenate([l_pos, l_neg], axis=1) / tau
    lse, probs = _log_softmax_parts(logits)
    losses = lse[:, 0] - logits[:, 0]
    grad = (probs[:, :1] - 1.0) * pos64
    if len(negs):
        grad += matmul(probs[:, 1:], negs)
        correct = logits[:, 0] > logits[:, 1:].max(axis=1)
    else:
        correct = np.ones(len(z64), dtype=bool)
    return losses, correct, (grad / tau).astype(np.float32)


def pretext_accuracy(outcomes) -> float:
    """Fraction of correct identifications; accepts outcomes or booleans."""
    flags = [o.correct if isinstance(o, ContrastiveOutcome) else bool(o) for o in outcomes]
    if not flags:
        raise UndefinedAccuracyError("pretext accuracy of an empty sub-batch is undefined")
    return sum(flags) / len(flags)


def weighted_epoch_loss(losses, p) -> float:
    losses = np.asarray(losses, np.float64)
    p = np.asarray(p, np.float64)
    if losses.shape != p.shape:
        raise ShapeError(f"{losses.shape[0] if losses.ndim else 0} losses vs {p.shape[0] if p.ndim else 0} weights")
    if abs(p.sum() - 1.0) > 1e-6:
        raise DomainError(f"weights sum to {p.sum()}, not 1")
    return float(np.sum(losses * p))
