"""Command-line entry point: ``adda pretrain | probe | ablate | report | gen-data``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .augment import JITTER
from .checkpoint import load_checkpoint
from .config import composition_lines, load_config, load_run_dataset
from .data import easy_scenario, generate_synthetic, load_dataset, save_dataset
from .errors import AddaError, ParameterError
from .evaluation import extract_features, linear_probe
from .report import render_report
from .trainer import fixed_baseline, pretrain

log = logging.getLogger("adda")

PROBE_COLUMNS = ["checkpoint", "probe_epochs", "top1"]
ABLATION_COLUMNS = ["run_id", "method", "final_composition", "final_jitter_freq", "top1"]


def _append_csv(path, columns, row):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            writer.writerow(columns)
        writer.writerow(row)


def _next_run_id(path):
    if not Path(path).exists():
        return 1
    with open(path, newline="") as fh:
        ids = [int(r["run_id"]) for r in csv.DictReader(fh) if r.get("run_id")]
    return max(ids, default=0) + 1


def _check_finite_state(state):
    if not all(np.all(np.isfinite(a)) for _, a in state.pair.query.items()):
        raise AddaError("training finished with non-finite encoder parameters")


def cmd_pretrain(args):
    cfg = load_config(args.config, overrides={"seed": args.seed})
    dataset = load_run_dataset(cfg)
    resume = args.resume or cfg.resume
    state = pretrain(cfg.train, dataset, resume=resume)
    _check_finite_state(state)
    print(f"metrics: {cfg.train.metrics_path}")
    print(f"checkpoint: {cfg.train.checkpoint_path}")
    return 0


def probe_checkpoint(params, dataset, epochs, lr, batch, seed=0):
    features, labels = extract_features(params, dataset)
    return linear_probe(features, labels, epochs, lr, seed, batch)


def cmd_probe(args):
    if args.probe_epochs < 1:
        raise ParameterError(f"--probe-epochs must be >= 1, got {args.probe_epochs}")
    ckpt = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    result = probe_checkpoint(ckpt.pair.query, dataset, args.probe_epochs, args.probe_lr, args.probe_batch, args.seed)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "probe.csv"
    _append_csv(out, PROBE_COLUMNS, [str(args.checkpoint), args.probe_epochs, repr(result.top1)])
    print(f"top1 {result.top1:.4f} -> {out}")
    return 0


def final_composition(state):
    """Index of the largest sub-batch in the last epoch (lowest index on ties)."""
    return int(np.argmax(state.history[-1].sizes))


def run_ablation(cfg, dataset, table_path=None):
    """Adaptive run plus one fixed baseline per composition, each probed; appends to the table."""
    table_path = Path(table_path or cfg.out_dir / "ablation.csv")
    run_id = _next_run_id(table_path)
    run_dir = cfg.out_dir / "ablate" / f"run-{run_id}"
    comps = cfg.train.compositions
    methods = [("adaptive", None)] + [(f"fixed_{i}", i) for i in range(len(comps))]
    rows = []
    for method, index in methods:
        train = cfg.train.__class__(**{
            **cfg.train.__dict__,
            "metrics_path": str(run_dir / method / "metrics.csv"),
            "checkpoint_path": str(run_dir / method / "checkpoint.adck"),
        })
        log.info("ablation run %d: %s", run_id, method)
        state = pretrain(train, dataset) if index is None else fixed_baseline(train, dataset, index)
        _check_finite_state(state)
        result = probe_checkpoint(state.pair.query, dataset, cfg.probe_epochs, cfg.probe_lr, cfg.probe_batch)
        final = final_composition(state)
        rows.append([run_id, method, comps[final].id, comps[final].frequency(JITTER), repr(result.top1)])
    for row in rows:
        _append_csv(table_path, ABLATION_COLUMNS, row)
    return run_id, rows


def cmd_ablate(args):
    cfg = load_config(args.config, overrides={"seed": args.seed})
    dataset = load_run_dataset(cfg)
    run_id, rows = run_ablation(cfg, dataset)
    for row in rows:
        print(f"run {row[0]} {row[1]:<10} final composition {row[2]} (jitter {row[3]}) top1 {float(row[4]):.4f}")
    return 0


def cmd_report(args):
    for path in render_report(args.metrics, args.out):
        print(path)
    return 0


def _parse_hw(text):
    parts = text.lower().split("x")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise argparse.ArgumentTypeError(f"expected <H>x<W>, got {text!r}")
    return int(parts[0]), int(parts[1])


def cmd_gen_data(args):
    if args.scenario == "easy":
        dataset, comps = easy_scenario(args.classes, args.per_class, args.hw, args.seed)
        comp_path = Path(str(args.out) + ".comps.conf")
        comp_path.write_text("\n".join(composition_lines(comps)) + "\n")
        print(f"compositions: {comp_path}")
    else:
        dataset = generate_synthetic(args.classes, args.per_class, args.hw, args.seed)
    save_dataset(dataset, args.out)
    print(f"dataset: {args.out} ({len(dataset)} images)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="adda", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="adaptive contrastive pretraining")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("probe", help="linear probe on frozen features")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--probe-epochs", type=int, default=50)
    p.add_argument("--probe-lr", type=float, default=0.1)
    p.add_argument("--probe-batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="probe CSV to append to (default: probe.csv next to the checkpoint)")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("ablate", help="adaptive run vs fixed compositions")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="plot sampling dynamics")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=500)
    p.add_argument("--hw", type=_parse_hw, default=(16, 16))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--scenario", choices=("standard", "easy"), default="standard")
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (AddaError, OSError) as exc:
        print(f"adda {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
