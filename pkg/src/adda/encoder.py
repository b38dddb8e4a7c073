"""Query/key MLP encoders with an l2-normalized projection head.

    h = relu(relu(x W1 + b1) W2 + b2)      backbone features (probe input)
    z = normalize(h Wp + bp)               contrastive embedding

The forward and backward passes are dtype-generic: float32 in training,
float64 when a test wants a precise finite-difference reference.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import NumericError, ParameterError, ShapeError
from .numerics import RngStream, l2_normalize_rows, matmul

PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wp", "bp")


@dataclass
class EncoderParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    Wp: np.ndarray
    bp: np.ndarray

    def __post_init__(self):
        if self.W1.ndim != 2 or self.Wp.ndim != 2:
            raise ShapeError("W1 and Wp must be matrices")
        d_h, d_z = self.W1.shape[1], self.Wp.shape[1]
        expected = {"b1": (d_h,), "W2": (d_h, d_h), "b2": (d_h,), "Wp": (d_h, d_z), "bp": (d_z,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def dims(self):
        """``(d_in, d_h, d_z)``."""
        return self.W1.shape[0], self.W1.shape[1], self.Wp.shape[1]

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def map(self, fn):
        return EncoderParams(**{name: fn(value) for name, value in self.items()})

    def copy(self):
        return self.map(np.copy)

    def astype(self, dtype):
        return self.map(lambda a: a.astype(dtype))

    def flatten(self) -> np.ndarray:
        return np.concatenate([value.ravel() for _, value in self.items()])

    def unflatten(self, flat):
        out, offset = {}, 0
        for name, value in self.items():
            out[name] = np.asarray(flat[offset:offset + value.size], dtype=value.dtype).reshape(value.shape)
            offset += value.size
        return EncoderParams(**out)


@dataclass
class EncoderPair:
    query: EncoderParams
    key: EncoderParams
    momentum: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.momentum <= 1.0:
            raise ParameterError(f"momentum {self.momentum} outside [0, 1]")
        for (name, q), (_, k) in zip(self.query.items(), self.key.items()):
            if q.shape != k.shape:
                raise ShapeError(f"query/key shape mismatch for {name}: {q.shape} vs {k.shape}")


@dataclass
class ForwardCache:
    params: EncoderParams
    x: np.ndarray
    a1: np.ndarray
    h1: np.ndarray
    a2: np.ndarray
    h: np.ndarray
    norms: np.ndarray
    z: np.ndarray


def init_params(d_in, d_h, d_z, rng: RngStream) -> EncoderParams:
    """Weights uniform in +-1/sqrt(fan_in), biases zero."""

    def layer(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        w = (rng.uniform_array(fan_in * fan_out) * 2.0 - 1.0) * bound
        return w.reshape(fan_in, fan_out).astype(np.float32), np.zeros(fan_out, np.float32)

    W1, b1 = layer(d_in, d_h)
    W2, b2 = layer(d_h, d_h)
    Wp, bp = layer(d_h, d_z)
    return EncoderParams(W1, b1, W2, b2, Wp, bp)


def init_pair(d_in, d_h, d_z, rng: RngStream, momentum=0.99) -> EncoderPair:
    query = init_params(d_in, d_h, d_z, rng)
    return EncoderPair(query, query.copy(), momentum)


def forward(params: EncoderParams, batch: np.ndarray):
    """Returns ``(h, z, cache)``; raises DegenerateEmbeddingError on a zero projection."""
    x = np.asarray(batch)
    if x.ndim != 2 or x.shape[1] != params.W1.shape[0]:
        raise ShapeError(f"batch shape {x.shape} does not match input dim {params.W1.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite encoder input")
    x = x.astype(params.W1.dtype, copy=False)
    a1 = matmul(x, params.W1) + params.b1
    h1 = np.maximum(a1, 0)
    a2 = matmul(h1, params.W2) + params.b2
    h = np.maximum(a2, 0)
    v = matmul(h, params.Wp) + params.bp
    z, norms = l2_normalize_rows(v)
    return h, z, ForwardCache(params, x, a1, h1, a2, h, norms, z)


def normalize_backward(z, norms, grad_z):
    """Pull ``grad_z`` back through ``z = v / |v|``: ``(I - z z^T) grad_z / |v|`` per row."""
    radial = np.sum(z * grad_z, axis=1, keepdims=True)
    return (grad_z - z * radial) / norms


def backward(cache: ForwardCache, grad_z: np.ndarray) -> EncoderParams:
    p = cache.params
    grad_z = np.asarray(grad_z, dtype=cache.z.dtype)
    if grad_z.shape != cache.z.shape:
        raise ShapeError(f"grad_z shape {grad_z.shape} does not match embeddings {cache.z.shape}")
    dv = normalize_backward(cache.z, cache.norms, grad_z)
    dWp = matmul(cache.h.T, dv)
    dbp = dv.sum(axis=0)
    da2 = matmul(dv, p.Wp.T) * (cache.a2 > 0)
    dW2 = matmul(cache.h1.T, da2)
    db2 = da2.sum(axis=0)
    da1 = matmul(da2, p.W2.T) * (cache.a1 > 0)
    dW1 = matmul(cache.x.T, da1)
    db1 = da1.sum(axis=0)
    return EncoderParams(dW1, db1, dW2, db2, dWp, dbp)


def sgd_step(params: EncoderParams, grads: EncoderParams, lr, weight_decay=0.0) -> EncoderParams:
    if lr < 0:
        raise ParameterError(f"learning rate must be non-negative, got {lr}")
    out = {}
    for (name, p), (_, g) in zip(params.items(), grads.items()):
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}; aborting epoch")
        if lr == 0:
            out[name] = p.copy()
            continue
        step = g + p.dtype.type(weight_decay) * p if weight_decay else g
        out[name] = (p - p.dtype.type(lr) * step).astype(p.dtype)
    return EncoderParams(**out)


def momentum_update(pair: EncoderPair) -> EncoderPair:
    m = pair.momentum
    if m == 1.0:
        return EncoderPair(pair.query, pair.key.copy(), m)
    key = {}
    for (name, q), (_, k) in zip(pair.query.items(), pair.key.items()):
        key[name] = (k.dtype.type(m) * k + k.dtype.type(1.0 - m) * q).astype(k.dtype)
    return EncoderPair(pair.query, EncoderParams(**key), m)
