"""Command line entry points: train, eval, synth-noise, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, apply_overrides, dump_config, load_config
from .train import evaluate_model, load_model_checkpoint, prepare_data, train


def _add_train(sub):
    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--run-dir", default="runs/latest")
    p.add_argument("--resume", default=None)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint on valid or test")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--out", default=None)


def _add_synth(sub):
    p = sub.add_parser("synth-noise", help="planted-noise detection experiment")
    p.add_argument("--config", default=None)
    p.add_argument("--run-dir", default="runs/synth-noise")
    p.add_argument("--users", type=int, default=2000)
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--clusters", type=int, default=10)
    p.add_argument("--noise-prob", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")


def _add_report(sub):
    p = sub.add_parser("report", help="tables and plots over finished runs")
    p.add_argument("--dir", required=True)


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    apply_overrides(cfg, args.override)
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, run_dir / "config.json")
    result = train(cfg, run_dir, resume_from=args.resume, log_stream=sys.stdout)
    print(json.dumps({
        "best_epoch": result["best_epoch"],
        "best_hr@20": result["best_hr"],
        "checkpoint": result["best_checkpoint"],
    }))
    return 0


def _cmd_eval(args) -> int:
    model, cfg, manifest = load_model_checkpoint(args.checkpoint)
    split, stats = prepare_data(cfg)
    if stats.catalog_size != manifest["state"]["catalog_size"]:
        print(
            f"fatal: checkpoint catalog size {manifest['state']['catalog_size']} "
            f"does not match dataset catalog size {stats.catalog_size}",
            file=sys.stderr,
        )
        return 2
    part = split.valid if args.split == "valid" else split.test
    report = evaluate_model(model, part, split.user_items, stats.catalog_size, cfg)
    payload = report.to_json()
    print(payload)
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    return 0


def _cmd_synth(args) -> int:
    from .synth import synth_noise_experiment

    cfg = load_config(args.config) if args.config else RunConfig()
    apply_overrides(cfg, args.override)
    report = synth_noise_experiment(
        cfg, args.run_dir, num_users=args.users, num_items=args.items,
        num_clusters=args.clusters, noise_prob=args.noise_prob,
        max_epochs=args.epochs,
    )
    print(json.dumps(report, indent=2))
    return 0


def _cmd_report(args) -> int:
    from .report import write_report

    path = write_report(args.dir)
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="seqdenoise")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_train(sub)
    _add_eval(sub)
    _add_synth(sub)
    _add_report(sub)
    args = parser.parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "eval": _cmd_eval,
        "synth-noise": _cmd_synth,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
