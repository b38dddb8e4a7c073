"""Accuracy-feedback sampling over augmentation compositions.

The persistent state is the raw score ``s_i = mean(1 - acc_i)`` of each
composition.  Probabilities are ``softmax(ur * s)``, applied once when scores
are turned into an allocation, so storing and sizing describe the same rule.
Compositions that were easy last epoch (high pretext accuracy) get smaller
sub-batches next epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError, InfeasiblePlanError, ParameterError, ShapeError
from .numerics import RngStream, softmax

INITIAL_SCORE = 0.5


@dataclass
class SamplerState:
    scores: np.ndarray
    ur: float = 1.0
    epoch: int = 0
    last_acc: np.ndarray = field(default=None)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).copy()
        if self.scores.ndim != 1 or len(self.scores) < 1:
            raise ParameterError("sampler needs at least one composition")
        if self.ur <= 0:
            raise ParameterError(f"updating rate must be positive, got {self.ur}")
        if self.last_acc is None:
            self.last_acc = np.full(len(self.scores), np.nan)
        self.last_acc = np.asarray(self.last_acc, dtype=np.float64).copy()

    @property
    def n(self):
        return len(self.scores)

    def copy(self):
        return SamplerState(self.scores, self.ur, self.epoch, self.last_acc)

    def __eq__(self, other):
        return (
            isinstance(other, SamplerState)
            and self.ur == other.ur
            and self.epoch == other.epoch
            and np.array_equal(self.scores, other.scores)
            and np.array_equal(self.last_acc, other.last_acc, equal_nan=True)
        )


def init_uniform(n, ur=1.0, allow_single=False) -> SamplerState:
    """Equal scores, hence exactly uniform probabilities.

    A single composition is only accepted with ``allow_single`` (the
    plain-MoCo degenerate case run by the trainer).
    """
    if n < 2 and not (allow_single and n == 1):
        raise ParameterError(f"need at least 2 compositions, got {n}")
    return SamplerState(np.full(n, INITIAL_SCORE), ur)


def probabilities(state: SamplerState) -> np.ndarray:
    return softmax(state.scores, state.ur)


def _epoch_mean(value):
    if value is None:
        return None
    values = np.atleast_1d(np.asarray(value, dtype=np.float64))
    values = values[~np.isnan(values)]
    if values.size == 0:
        return None
    if np.any((values < 0) | (values > 1)):
        raise DomainError(f"accuracy values {values} outside [0, 1]")
    return float(values.mean())


def update(state: SamplerState, acc) -> SamplerState:
    """Feed back one epoch of pretext accuracies.

    ``acc[i]`` is composition i's accuracy: a number, a sequence of per-step
    accuracies (averaged), or ``None``/NaN when its sub-batch was empty.
    Missing entries, including any beyond ``len(acc)``, keep their score.
    """
    if len(acc) > state.n:
        raise ShapeError(f"{len(acc)} accuracies for {state.n} compositions")
    new = state.copy()
    for i, value in enumerate(acc):
        mean = _epoch_mean(value)
        if mean is None:
            continue
        new.scores[i] = 1.0 - mean
        new.last_acc[i] = mean
    new.epoch = state.epoch + 1
    return new


def subbatch_sizes(p, num_x, min_size=1) -> np.ndarray:
    """Largest-remainder apportionment of ``num_x`` items by weights ``p``.

    Remainders are ranked largest first, ties broken by lowest index.  Any
    sub-batch left below ``min_size`` then takes items one at a time from the
    current largest sub-batch (lowest index on ties).
    """
    p = np.asarray(p, dtype=np.float64)
    n = len(p)
    if n == 0 or np.any(p < 0) or not np.all(np.isfinite(p)) or p.sum() <= 0:
        raise DomainError(f"invalid allocation weights {p}")
    if num_x < n * min_size:
        raise InfeasiblePlanError(f"cannot give {n} sub-batches at least {min_size} of {num_x} items")
    weights = [Fraction(float(x)) for x in p]
    total = sum(weights)
    quotas = [w * num_x / total for w in weights]
    sizes = [int(q) for q in quotas]  # floor, quotas are non-negative
    order = sorted(range(n), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[: num_x - sum(sizes)]:
        sizes[i] += 1
    for i in range(n):
        while sizes[i] < min_size:
            donor = max(range(n), key=lambda j: (sizes[j], -j))
            sizes[donor] -= 1
            sizes[i] += 1
    return np.array(sizes, dtype=np.int64)


@dataclass
class SubBatchPlan:
    sizes: np.ndarray
    assignment: np.ndarray  # dataset indices, one contiguous segment per composition

    def segments(self):
        bounds = np.concatenate([[0], np.cumsum(self.sizes)])
        return [self.assignment[bounds[i]:bounds[i + 1]] for i in range(len(self.sizes))]


def plan_epoch(state: SamplerState, num_x, rng: RngStream, min_size=1) -> SubBatchPlan:
    """Shuffle ``range(num_x)`` and cut it into one segment per composition."""
    if num_x <= 0:
        raise ParameterError("cannot plan an epoch over an empty dataset")
    sizes = subbatch_sizes(probabilities(state), num_x, min_size)
    return SubBatchPlan(sizes, rng.permutation(num_x))


def plan_steps(p, num_x, batch_size, rng: RngStream, min_size=1):
    """Per-step plans: shuffle once, drop the last partial batch, split each batch by ``p``.

    Every retained index appears in exactly one step and one segment.
    """
    if num_x <= 0:
        raise ParameterError("cannot plan an epoch over an empty dataset")
    sizes = subbatch_sizes(p, batch_size, min_size)
    perm = rng.permutation(num_x)
    steps = num_x // batch_size
    return [SubBatchPlan(sizes.copy(), perm[s * batch_size:(s + 1) * batch_size]) for s in range(steps)]
