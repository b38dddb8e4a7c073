"""Dense array arithmetic, counter-based randomness and a finite-difference oracle.

Model state is float32.  ``matmul`` accumulates over the inner dimension
strictly left to right so products are bit-reproducible regardless of the
BLAS build or thread count.

Random numbers come from a counter-based generator.  A stream is the triple
``(seed, stream_id, counter)`` and the value of a draw depends on nothing else:

    key   = mix64(mix64(seed) ^ mix64(stream_id + GOLDEN))
    bits  = mix64(key + (counter + 1) * GOLDEN)          (mod 2**64)
    value = (bits >> 11) * 2**-53                          in [0, 1)

``mix64`` is the SplitMix64 finalizer (constants 0xBF58476D1CE4E5B9 and
0x94D049BB133111EB, shifts 30/27/31) and ``GOLDEN`` is 0x9E3779B97F4A7C15.
Every step is unsigned 64-bit arithmetic, so runs are portable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEmbeddingError, DomainError, NumericError, ShapeError

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
NORM_EPS = 1e-12


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_M1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_M2)
    z ^= z >> np.uint64(31)
    return z


def _label(key) -> int:
    if isinstance(key, str):
        raw = key.encode("utf-8")
        h = len(raw)
        for i in range(0, len(raw), 8):
            h = mix64(h ^ int.from_bytes(raw[i:i + 8], "little"))
        return h
    return int(key) & MASK64


def derive_stream_id(parent: int, *keys) -> int:
    """Fold ``keys`` (ints or strings) into a child stream id of ``parent``."""
    h = parent & MASK64
    for key in keys:
        h = mix64((h ^ _label(key)) + GOLDEN)
    return h


def stream_key(seed: int, stream_id: int) -> int:
    return mix64(mix64(seed) ^ mix64(stream_id + GOLDEN))


def draw_bits(seed: int, stream_id: int, counter: int) -> int:
    key = stream_key(seed, stream_id)
    return mix64(key + (counter + 1) * GOLDEN)


def bits_to_unit(bits: int) -> float:
    return (bits >> 11) * (1.0 / (1 << 53))


@dataclass
class RngStream:
    """A position in one counter-based random stream.

    Each draw advances ``counter``.  Hand a stream to one consumer only; use
    :meth:`spawn` to derive independent children (e.g. one per sample).
    """

    seed: int
    stream_id: int = 0
    counter: int = 0

    def __post_init__(self):
        self.seed = int(self.seed) & MASK64
        self.stream_id = int(self.stream_id) & MASK64

    def uniform(self) -> float:
        value = bits_to_unit(draw_bits(self.seed, self.stream_id, self.counter))
        self.counter += 1
        return value

    def uniform_array(self, n: int) -> np.ndarray:
        """``n`` consecutive draws as float64, identical to ``n`` calls of ``uniform``."""
        key = np.uint64(stream_key(self.seed, self.stream_id))
        counters = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        bits = _mix64_array(key + counters * np.uint64(GOLDEN))
        self.counter += n
        return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def uniform_range(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform()

    def integer(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        return min(int(self.uniform() * n), n - 1)

    def normal_array(self, n: int) -> np.ndarray:
        """Standard normals by Box-Muller; consumes ``2 * ceil(n / 2)`` draws."""
        m = (n + 1) // 2
        u = self.uniform_array(2 * m)
        r = np.sqrt(-2.0 * np.log1p(-u[:m]))
        theta = 2.0 * np.pi * u[m:]
        return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = np.arange(n, dtype=np.int64)
        u = self.uniform_array(max(n - 1, 0))
        for i in range(n - 1, 0, -1):
            j = min(int(u[n - 1 - i] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def spawn(self, *keys) -> "RngStream":
        return RngStream(self.seed, derive_stream_id(self.stream_id, *keys), 0)


def rng_uniform(stream: RngStream) -> float:
    return stream.uniform()


def check_finite(a, what="array"):
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite values in {what}")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with a fixed left-to-right summation order over the inner axis."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    dtype = np.result_type(a.dtype, b.dtype, np.float32)
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=dtype)
    if k == 0:
        return out
    tmp = np.empty((m, n), dtype=dtype)
    a = np.ascontiguousarray(a.T, dtype=dtype)  # row i of a.T is column i of a
    b = np.ascontiguousarray(b, dtype=dtype)
    for i in range(k):
        np.multiply(a[i][:, None], b[i][None, :], out=tmp)
        out += tmp
    return check_finite(out, "matmul result")


def softmax(v, scale: float = 1.0) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise DomainError("softmax of an empty vector")
    if not np.all(np.isfinite(v)):
        raise DomainError("softmax input must be finite")
    logits = scale * v
    e = np.exp(logits - logits.max())
    return e / e.sum()


def l2_normalize(v) -> np.ndarray:
    v = np.asarray(v)
    norm = np.sqrt(np.sum(v.astype(np.float64) ** 2))
    if norm <= NORM_EPS:
        raise DegenerateEmbeddingError(f"cannot normalize vector with norm {norm:g}")
    return (v / norm).astype(v.dtype if v.dtype.kind == "f" else np.float64)


def l2_normalize_rows(m: np.ndarray):
    """Row-wise normalization; returns ``(normalized, norms)``."""
    norms = np.sqrt(np.sum(m * m, axis=1, keepdims=True))
    if np.any(norms <= NORM_EPS):
        bad = int(np.argmin(norms[:, 0]))
        raise DegenerateEmbeddingError(f"row {bad} has near-zero norm {float(norms[bad, 0]):g}")
    return m / norms, norms


def finite_diff_grad(f, x, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (computed in float64)."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value near coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad.reshape(x.shape)
