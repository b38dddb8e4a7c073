"""``ADCK`` checkpoint files.

Layout (little-endian)::

    b"ADCK" | u32 version | u32 tensor_count
    tensor_count x ( u32 name_len | name (utf-8) | u32 ndim | ndim x u32 | float32 payload )
    u32 meta_len | meta (utf-8 JSON)

Tensors hold the query and key encoder parameters (``query.W1`` ...,
``key.W1`` ...) and the queue contents (``queue.entries``).  The JSON block
holds the sampler state, epoch counter, queue pointers and the seed plan.
Floats in JSON round-trip exactly, which keeps a resumed run bit-identical.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .contrastive import Queue
from .encoder import EncoderPair, EncoderParams, PARAM_NAMES
from .errors import FormatError
from .scheduler import SamplerState

MAGIC = b"ADCK"
VERSION = 1
RNG_SCHEME = "splitmix64-counter/v1"


@dataclass
class Checkpoint:
    pair: EncoderPair
    sampler: SamplerState
    queue: Queue
    seed: int
    frozen_index: int | None = None

    @property
    def epoch(self):
        return self.sampler.epoch


def _nan_to_none(values):
    return [None if math.isnan(v) else float(v) for v in values]


def dumps_checkpoint(ckpt: Checkpoint) -> bytes:
    tensors = [(f"query.{n}", a) for n, a in ckpt.pair.query.items()]
    tensors += [(f"key.{n}", a) for n, a in ckpt.pair.key.items()]
    tensors.append(("queue.entries", ckpt.queue.entries))
    out = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors:
        raw_name = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw_name)) + raw_name)
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    meta = {
        "epoch": ckpt.sampler.epoch,
        "seed": ckpt.seed,
        "rng": RNG_SCHEME,
        "momentum": ckpt.pair.momentum,
        "frozen_index": ckpt.frozen_index,
        "sampler": {
            "scores": [float(s) for s in ckpt.sampler.scores],
            "ur": ckpt.sampler.ur,
            "last_acc": _nan_to_none(ckpt.sampler.last_acc),
        },
        "queue": {"capacity": ckpt.queue.capacity, "head": ckpt.queue.head, "filled": ckpt.queue.filled},
    }
    raw_meta = json.dumps(meta, sort_keys=True).encode("utf-8")
    out.append(struct.pack("<I", len(raw_meta)) + raw_meta)
    return b"".join(out)


class _Reader:
    def __init__(self, raw):
        self.raw = raw
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.raw):
            raise FormatError(f"truncated checkpoint while reading {what}", offset=self.pos)
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def loads_checkpoint(raw: bytes) -> Checkpoint:
    r = _Reader(raw)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic, not an ADCK checkpoint", offset=0)
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    tensors = {}
    for _ in range(r.u32("tensor count")):
        name = r.take(r.u32("name length"), "tensor name").decode("utf-8")
        ndim = r.u32(f"{name} ndim")
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim, f"{name} shape"))
        size = int(np.prod(shape)) if ndim else 1
        payload = r.take(4 * size, f"{name} payload")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    meta_start = r.pos
    try:
        meta = json.loads(r.take(r.u32("metadata length"), "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable checkpoint metadata: {exc}", offset=meta_start) from exc
    if r.pos != len(raw):
        raise FormatError("trailing bytes after checkpoint metadata", offset=r.pos)
    try:
        query = EncoderParams(**{n: tensors[f"query.{n}"] for n in PARAM_NAMES})
        key = EncoderParams(**{n: tensors[f"key.{n}"] for n in PARAM_NAMES})
        s = meta["sampler"]
        last_acc = [math.nan if v is None else v for v in s["last_acc"]]
        sampler = SamplerState(np.array(s["scores"], dtype=np.float64), s["ur"], meta["epoch"], np.array(last_acc))
        entries = tensors["queue.entries"]
        q = meta["queue"]
        queue = Queue(q["capacity"], entries.shape[1])
        queue.entries[:] = entries
        queue.head, queue.filled = q["head"], q["filled"]
        pair = EncoderPair(query, key, meta["momentum"])
        return Checkpoint(pair, sampler, queue, meta["seed"], meta.get("frozen_index"))
    except KeyError as exc:
        raise FormatError(f"checkpoint is missing {exc.args[0]!r}", offset=meta_start) from exc


def save_checkpoint(ckpt: Checkpoint, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps_checkpoint(ckpt))
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    return loads_checkpoint(Path(path).read_bytes())
