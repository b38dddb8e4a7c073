"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Compositions are declared with
``comp.<i>.<field>`` keys; any composition field left out takes the standard
default.  Unknown keys are errors.  Relative paths are resolved against the
directory holding the config file.

Defaults follow the reference MoCo v2 + adaptive setup where it states them
(tau 0.2, ur 1.0, frequencies 0.8/0.2/0.5/0.5, batch 128, lr 0.03); sizes,
epochs and the probe schedule are scaled for a single CPU core.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .augment import (
    BLUR, Composition, DEFAULT_CROP_SCALE, DEFAULT_FREQUENCIES, DEFAULT_JITTER, DEFAULT_SIGMA, FLIP,
    GRAYSCALE, JITTER,
)
from .data import easy_compositions
from .errors import ConfigError
from .trainer import TrainConfig

# Jitter frequencies of the default three-composition search space.
DEFAULT_JITTER_SWEEP = (0.6, 0.7, 0.8)


def _bool(text):
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _hw(text):
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not m:
        raise ValueError(f"expected <H>x<W>, got {text!r}")
    return int(m.group(1)), int(m.group(2))


TRAIN_KEYS = {
    "seed": int, "epochs": int, "batch_size": int, "lr": float, "weight_decay": float,
    "tau": float, "momentum": float, "queue_size": int, "ur": float, "min_subbatch": int,
    "hidden_dim": int, "embed_dim": int, "loss_weighting": str, "eq2_weights": str,
    "checkpoint_every": int, "record_wall_time": _bool, "threads": int,
}
RUN_KEYS = {
    "dataset": str, "scenario": str, "out_dir": str, "metrics": str, "checkpoint": str, "resume": str,
    "data.classes": int, "data.per_class": int, "data.hw": _hw, "data.seed": int,
    "probe_epochs": int, "probe_lr": float, "probe_batch": int,
}
COMP_KEYS = {
    "jitter_freq": float, "gray_freq": float, "blur_freq": float, "flip_freq": float,
    "crop_min": float, "crop_max": float, "brightness": float, "contrast": float,
    "saturation": float, "sigma_min": float, "sigma_max": float,
}
PATH_KEYS = ("dataset", "out_dir", "metrics", "checkpoint", "resume")


@dataclass
class RunConfig:
    train: TrainConfig
    dataset: Path | None = None
    scenario: str = "standard"
    data_classes: int = 4
    data_per_class: int = 500
    data_hw: tuple = (16, 16)
    data_seed: int = 0
    out_dir: Path = Path("runs")
    probe_epochs: int = 50
    probe_lr: float = 0.1
    probe_batch: int = 64
    resume: Path | None = None
    source: Path | None = field(default=None, repr=False)


def parse_lines(text, origin="<config>"):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        values[key] = (value, lineno)
    return values


def _convert(key, kind, value, origin, lineno):
    try:
        return kind(value)
    except ValueError as exc:
        raise ConfigError(f"{origin}:{lineno}: bad value for {key!r}: {exc}") from None


def build_compositions(comp_values):
    comps = []
    for index in sorted(comp_values):
        v = comp_values[index]
        freqs = DEFAULT_FREQUENCIES
        comps.append(Composition.standard(
            index,
            jitter=v.get("jitter_freq", freqs[0]),
            grayscale=v.get("gray_freq", freqs[1]),
            blur=v.get("blur_freq", freqs[2]),
            flip=v.get("flip_freq", freqs[3]),
            crop_scale=(v.get("crop_min", DEFAULT_CROP_SCALE[0]), v.get("crop_max", DEFAULT_CROP_SCALE[1])),
            strengths=(v.get("brightness", DEFAULT_JITTER[0]), v.get("contrast", DEFAULT_JITTER[1]),
                       v.get("saturation", DEFAULT_JITTER[2])),
            sigma_range=(v.get("sigma_min", DEFAULT_SIGMA[0]), v.get("sigma_max", DEFAULT_SIGMA[1])),
        ))
    if [c.id for c in comps] != list(range(len(comps))):
        raise ConfigError(f"composition indices must be 0..N-1 without gaps, got {[c.id for c in comps]}")
    return comps


def composition_lines(comps):
    """Render compositions back into ``comp.<i>.*`` config lines."""
    lines = []
    for c in comps:
        jitter = next((op for op in c.ops if op.kind == JITTER), None)
        blur = next((op for op in c.ops if op.kind == BLUR), None)
        values = {
            "jitter_freq": c.frequency(JITTER), "gray_freq": c.frequency(GRAYSCALE),
            "blur_freq": c.frequency(BLUR), "flip_freq": c.frequency(FLIP),
            "crop_min": c.crop.scale[0], "crop_max": c.crop.scale[1],
        }
        if jitter is not None:
            values.update(zip(("brightness", "contrast", "saturation"), jitter.strengths))
        if blur is not None:
            values.update(sigma_min=blur.sigma_range[0], sigma_max=blur.sigma_range[1])
        lines += [f"comp.{c.id}.{k} = {v}" for k, v in values.items()]
    return lines


def parse_config(text, origin="<config>", base_dir=None, overrides=None) -> RunConfig:
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    train, run, comps = {}, {}, {}
    for key, (value, lineno) in parse_lines(text, origin).items():
        if key in TRAIN_KEYS:
            train[key] = _convert(key, TRAIN_KEYS[key], value, origin, lineno)
        elif key in RUN_KEYS:
            run[key] = _convert(key, RUN_KEYS[key], value, origin, lineno)
        else:
            m = re.fullmatch(r"comp\.(\d+)\.(\w+)", key)
            if not m or m.group(2) not in COMP_KEYS:
                raise ConfigError(f"{origin}:{lineno}: unknown config key {key!r}")
            comps.setdefault(int(m.group(1)), {})[m.group(2)] = _convert(
                key, COMP_KEYS[m.group(2)], value, origin, lineno)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in TRAIN_KEYS:
            train[key] = value
        elif key in RUN_KEYS:
            run[key] = value
        else:
            raise ConfigError(f"unknown override {key!r}")
    for key in PATH_KEYS:
        if key in run:
            run[key] = base_dir / run[key]

    scenario = run.get("scenario", "standard")
    if scenario not in ("standard", "easy"):
        raise ConfigError(f"scenario must be 'standard' or 'easy', got {scenario!r}")
    if comps:
        compositions = build_compositions(comps)
    elif scenario == "easy":
        compositions = easy_compositions()
    else:
        compositions = [Composition.standard(i, jitter=f) for i, f in enumerate(DEFAULT_JITTER_SWEEP)]

    out_dir = run.get("out_dir", base_dir / "runs")
    train.setdefault("metrics_path", str(run.get("metrics", out_dir / "metrics.csv")))
    train.setdefault("checkpoint_path", str(run.get("checkpoint", out_dir / "checkpoint.adck")))
    try:
        train_config = TrainConfig(compositions, **train)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    classes, per_class = run.get("data.classes", 4), run.get("data.per_class", 500)
    if classes < 2 or per_class < 1:
        raise ConfigError("data.classes must be >= 2 and data.per_class >= 1")
    return RunConfig(
        train=train_config,
        dataset=run.get("dataset"),
        scenario=scenario,
        data_classes=classes,
        data_per_class=per_class,
        data_hw=run.get("data.hw", (16, 16)),
        data_seed=run.get("data.seed", 0),
        out_dir=Path(out_dir),
        probe_epochs=run.get("probe_epochs", 50),
        probe_lr=run.get("probe_lr", 0.1),
        probe_batch=run.get("probe_batch", 64),
        resume=run.get("resume"),
    )


def load_config(path, overrides=None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    cfg = parse_config(text, str(path), path.parent, overrides)
    cfg.source = path
    return cfg


def load_run_dataset(cfg: RunConfig):
    from .data import generate_synthetic, load_dataset

    if cfg.dataset is not None:
        return load_dataset(cfg.dataset)
    return generate_synthetic(cfg.data_classes, cfg.data_per_class, cfg.data_hw, cfg.data_seed)
