"""The adaptive pretraining loop and its fixed-composition comparator.

Randomness is addressed, not consumed: with run stream ``R`` (seed, id 0),
epoch ``t`` shuffles with ``R/"epoch"/t/"plan"``, sample ``j`` draws its two
views from ``R/"epoch"/t/"view"/j`` and the encoder is initialized from
``R/"init"``.  Thread count and resume points therefore never change results.
"""

from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scheduler
from .augment import Composition, two_views
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .contrastive import Queue, infonce_batch
from .encoder import EncoderPair, backward, forward, init_pair, momentum_update, sgd_step
from .errors import ConfigError, NumericError, ParameterError
from .numerics import RngStream

log = logging.getLogger(__name__)

LOSS_WEIGHTINGS = ("eq2", "uniform")
EQ2_WEIGHTS = ("softmax", "realized")


@dataclass
class TrainConfig:
    compositions: list
    batch_size: int = 128
    epochs: int = 30
    lr: float = 0.03
    weight_decay: float = 1e-4
    tau: float = 0.2
    momentum: float = 0.99
    queue_size: int = 512
    ur: float = 1.0
    min_subbatch: int = 1
    seed: int = 0
    hidden_dim: int = 128
    embed_dim: int = 64
    loss_weighting: str = "eq2"
    eq2_weights: str = "softmax"
    metrics_path: str | None = None
    checkpoint_path: str | None = None
    checkpoint_every: int = 0
    record_wall_time: bool = False
    threads: int | None = None

    def __post_init__(self):
        self.compositions = list(self.compositions)
        n = len(self.compositions)
        if n < 1:
            raise ConfigError("at least one composition is required")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.batch_size < n * self.min_subbatch or self.batch_size < 1:
            raise ConfigError(f"batch_size {self.batch_size} < {n} compositions x min_subbatch {self.min_subbatch}")
        if self.loss_weighting not in LOSS_WEIGHTINGS:
            raise ConfigError(f"loss_weighting must be one of {LOSS_WEIGHTINGS}, got {self.loss_weighting!r}")
        if self.eq2_weights not in EQ2_WEIGHTS:
            raise ConfigError(f"eq2_weights must be one of {EQ2_WEIGHTS}, got {self.eq2_weights!r}")
        if not 0.0 <= self.momentum <= 1.0:
            raise ConfigError(f"momentum must lie in [0, 1], got {self.momentum}")
        if self.lr < 0 or self.weight_decay < 0 or self.ur <= 0 or self.queue_size < 0:
            raise ConfigError("lr and weight_decay must be >= 0, ur > 0 and queue_size >= 0")

    @property
    def n(self):
        return len(self.compositions)


@dataclass
class EpochStats:
    epoch: int
    comp_ids: list
    p: np.ndarray
    scores: np.ndarray
    sizes: np.ndarray
    acc: np.ndarray  # NaN where a composition got no samples
    mean_loss: np.ndarray
    total_loss: float
    seconds: float = 0.0

    @property
    def p_std(self):
        return float(np.std(self.p))


@dataclass
class RunState:
    sampler: scheduler.SamplerState
    pair: EncoderPair
    queue: Queue
    history: list = field(default_factory=list)


def metrics_header(n):
    cols = ["epoch"]
    for prefix in ("comp_id", "p", "score", "size", "acc", "mean_loss"):
        cols += [f"{prefix}_{i}" for i in range(n)]
    return cols + ["total_loss", "p_std", "seconds"]


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if np.isnan(x) else repr(x)


def metrics_row(stats: EpochStats, record_wall_time=False):
    row = [str(stats.epoch)] + [str(c) for c in stats.comp_ids]
    for values in (stats.p, stats.scores, stats.sizes, stats.acc, stats.mean_loss):
        row += [_fmt(v) for v in values]
    seconds = stats.seconds if record_wall_time else 0.0
    return row + [_fmt(stats.total_loss), _fmt(stats.p_std), _fmt(seconds)]


def thread_count(config: TrainConfig):
    if config.threads:
        return max(1, int(config.threads))
    env = os.environ.get("ADDA_THREADS")
    return max(1, int(env)) if env else 1


def _view_pairs(dataset, comps, segments, epoch_rng, pool):
    jobs = [(int(j), comps[i]) for i, seg in enumerate(segments) for j in seg]

    def make(job):
        j, comp = job
        return two_views(dataset.images[j], comp, epoch_rng.spawn("view", j))

    views = list(pool.map(make, jobs)) if pool else [make(job) for job in jobs]
    xq = np.stack([v[0].ravel() for v in views])
    xk = np.stack([v[1].ravel() for v in views])
    return xq, xk


def train_epoch(state: RunState, dataset, config: TrainConfig, rng: RngStream, frozen_p=None, pool=None):
    """One epoch: plan, per-step split, contrastive update, then feedback.

    ``frozen_p`` pins the allocation (fixed-composition baseline); accuracies
    are still recorded into the sampler scores but never drive allocation.
    """
    start = time.perf_counter()
    n = config.n
    t = state.sampler.epoch
    epoch_rng = rng.spawn("epoch", t)
    if frozen_p is None:
        p = scheduler.probabilities(state.sampler)
        min_size = config.min_subbatch
    else:
        p = np.asarray(frozen_p, dtype=np.float64)
        min_size = 0
    plans = scheduler.plan_steps(p, len(dataset), config.batch_size, epoch_rng.spawn("plan"), min_size)
    if not plans:
        raise ConfigError(f"dataset of {len(dataset)} samples is smaller than batch_size {config.batch_size}")

    pair, queue = state.pair, state.queue
    step_acc = [[] for _ in range(n)]
    step_loss = [[] for _ in range(n)]
    totals = []
    for step, plan in enumerate(plans):
        segments = plan.segments()
        xq, xk = _view_pairs(dataset, config.compositions, segments, epoch_rng, pool)
        _, zq, cache = forward(pair.query, xq)
        _, zk, _ = forward(pair.key, xk)
        losses, correct, grad_z = infonce_batch(zq, zk, queue, config.tau)

        sizes = plan.sizes
        if config.eq2_weights == "realized":
            weights = sizes / sizes.sum()
        else:
            weights = p
        comp_of = np.repeat(np.arange(n), sizes)
        if config.loss_weighting == "eq2":
            per_sample = (weights / np.maximum(sizes, 1))[comp_of]
        else:
            per_sample = np.full(len(comp_of), 1.0 / len(comp_of))
        total = 0.0
        for i, seg_loss in enumerate(np.split(losses, np.cumsum(sizes)[:-1])):
            if len(seg_loss) == 0:
                continue
            mean = float(seg_loss.mean())
            step_loss[i].append(mean)
            step_acc[i].append(float(correct[comp_of == i].mean()))
            total += (weights[i] if config.loss_weighting == "eq2" else len(seg_loss) / len(losses)) * mean
        if not np.isfinite(total):
            raise NumericError(
                f"non-finite loss at epoch {t + 1} step {step}",
                snapshot={"epoch": t + 1, "step": step, "p": p.tolist(),
                          "step_losses": [l[-1] if l else None for l in step_loss]},
            )
        totals.append(total)

        grads = backward(cache, grad_z * per_sample[:, None].astype(np.float32))
        pair = EncoderPair(sgd_step(pair.query, grads, config.lr, config.weight_decay), pair.key, pair.momentum)
        pair = momentum_update(pair)
        queue.push(zk)

    sampler = scheduler.update(state.sampler, [a if a else None for a in step_acc])
    realized = plans[0].sizes * len(plans)
    stats = EpochStats(
        epoch=t + 1,
        comp_ids=[c.id for c in config.compositions],
        p=p,
        scores=sampler.scores.copy(),
        sizes=realized,
        acc=np.array([np.mean(a) if a else np.nan for a in step_acc]),
        mean_loss=np.array([np.mean(l) if l else np.nan for l in step_loss]),
        total_loss=float(np.mean(totals)),
        seconds=time.perf_counter() - start,
    )
    return RunState(sampler, pair, queue, state.history + [stats]), stats


def init_state(config: TrainConfig, dataset) -> RunState:
    out_shapes = {tuple(c.crop.out_hw or dataset.image_shape[1:]) for c in config.compositions}
    if len(out_shapes) != 1:
        raise ConfigError(f"compositions disagree on output size: {sorted(out_shapes)}")
    d_in = dataset.image_shape[0] * int(np.prod(out_shapes.pop()))
    rng = RngStream(config.seed, 0)
    pair = init_pair(d_in, config.hidden_dim, config.embed_dim, rng.spawn("init"), config.momentum)
    sampler = scheduler.init_uniform(config.n, config.ur, allow_single=True)
    return RunState(sampler, pair, Queue(config.queue_size, config.embed_dim))


def state_from_checkpoint(ckpt: Checkpoint, config: TrainConfig, dataset) -> RunState:
    fresh = init_state(config, dataset)
    if ckpt.seed != config.seed:
        raise ConfigError(f"checkpoint seed {ckpt.seed} differs from config seed {config.seed}")
    if ckpt.pair.query.dims != fresh.pair.query.dims:
        raise ConfigError(f"checkpoint encoder dims {ckpt.pair.query.dims} do not match config {fresh.pair.query.dims}")
    if ckpt.sampler.n != config.n:
        raise ConfigError(f"checkpoint has {ckpt.sampler.n} compositions, config has {config.n}")
    if ckpt.queue.capacity != config.queue_size:
        raise ConfigError(f"checkpoint queue capacity {ckpt.queue.capacity} differs from {config.queue_size}")
    return RunState(ckpt.sampler.copy(), ckpt.pair, ckpt.queue.copy())


def _read_rows(path, keep_through):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [r for r in rows[1:] if r and int(r[0]) <= keep_through]


def run(config: TrainConfig, dataset, frozen_index=None, resume=None) -> RunState:
    """Shared loop behind :func:`pretrain` and :func:`fixed_baseline`."""
    if frozen_index is not None and not 0 <= frozen_index < config.n:
        raise ParameterError(f"composition index {frozen_index} out of range for {config.n} compositions")
    frozen_p = None
    if frozen_index is not None:
        frozen_p = np.zeros(config.n)
        frozen_p[frozen_index] = 1.0

    if resume is not None:
        ckpt = resume if isinstance(resume, Checkpoint) else load_checkpoint(resume)
        if ckpt.frozen_index != frozen_index:
            raise ConfigError(f"checkpoint frozen index {ckpt.frozen_index} differs from requested {frozen_index}")
        state = state_from_checkpoint(ckpt, config, dataset)
    else:
        state = init_state(config, dataset)

    header = metrics_header(config.n)
    rows = []
    if config.metrics_path:
        Path(config.metrics_path).parent.mkdir(parents=True, exist_ok=True)
        if resume is not None and Path(config.metrics_path).exists():
            old_header, rows = _read_rows(config.metrics_path, state.sampler.epoch)
            if old_header != header:
                raise ConfigError(f"existing metrics file {config.metrics_path} has a different schema")

    def write_metrics():
        if not config.metrics_path:
            return
        with open(config.metrics_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)

    def checkpoint():
        # a "{epoch}" field in the path keeps one file per checkpointed epoch
        if config.checkpoint_path:
            path = config.checkpoint_path.replace("{epoch}", str(state.sampler.epoch))
            save_checkpoint(Checkpoint(state.pair, state.sampler, state.queue, config.seed, frozen_index), path)

    write_metrics()
    rng = RngStream(config.seed, 0)
    threads = thread_count(config)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        while state.sampler.epoch < config.epochs:
            state, stats = train_epoch(state, dataset, config, rng, frozen_p, pool)
            rows.append(metrics_row(stats, config.record_wall_time))
            write_metrics()
            log.info("epoch %d loss %.4f p %s acc %s", stats.epoch, stats.total_loss,
                     np.round(stats.p, 3).tolist(), np.round(stats.acc, 3).tolist())
            if config.checkpoint_every and stats.epoch % config.checkpoint_every == 0:
                checkpoint()
    finally:
        if pool:
            pool.shutdown()
    checkpoint()
    return state


def pretrain(config: TrainConfig, dataset, resume=None) -> RunState:
    """Closed-loop adaptive pretraining for ``config.epochs`` epochs."""
    return run(config, dataset, resume=resume)


def fixed_baseline(config: TrainConfig, dataset, composition_index, resume=None) -> RunState:
    """The same loop with the allocation frozen one-hot at ``composition_index``."""
    return run(config, dataset, frozen_index=composition_index, resume=resume)
