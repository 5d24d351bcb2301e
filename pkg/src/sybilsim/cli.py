"""Command line entry points: noattack, calibrate, train, train-baseline,
summarize. Exit code 0 only when the command produced its complete output
set."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from . import harness


def _load(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.outdir is not None:
        cfg.outdir = args.outdir
    if getattr(args, "episodes", None) is not None:
        cfg.agent.episodes = args.episodes
    if getattr(args, "steps", None) is not None:
        cfg.agent.steps = args.steps
    cfg.validate()
    return cfg


def _add_common(parser: argparse.ArgumentParser, with_counts: bool = True) -> None:
    parser.add_argument("--config", help="run config file (INI)")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--outdir", help="override the output directory")
    if with_counts:
        parser.add_argument("--episodes", type=int, help="override episode count")
        parser.add_argument("--steps", type=int, help="override steps per episode")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sybilsim",
        description="Sybil-attack testbed for a waiting-time adaptive signal")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("noattack", help="run one attack-free episode")
    _add_common(p)

    p = sub.add_parser("calibrate", help="calibrate the removal threshold")
    _add_common(p)

    p = sub.add_parser("train", help="train the attacking agent")
    _add_common(p)
    p.add_argument("--resume", action="store_true",
                   help="continue from the last checkpoint in outdir")

    p = sub.add_parser("train-baseline", help="train the comparison agent")
    _add_common(p)
    p.add_argument("--resume", action="store_true")

    p = sub.add_parser("summarize", help="recompute summary.json for a run")
    p.add_argument("run_dir", help="directory containing the run CSVs")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "noattack":
            cfg = _load(args)
            result = harness.cmd_noattack(cfg)
            print(json.dumps(result, indent=2, sort_keys=True))
        elif args.command == "calibrate":
            cfg = _load(args)
            result = harness.cmd_calibrate(cfg)
            print(json.dumps(result, indent=2, sort_keys=True))
        elif args.command in ("train", "train-baseline"):
            cfg = _load(args)
            mode = "attack" if args.command == "train" else "baseline"
            result = harness.cmd_train(cfg, mode=mode, resume=args.resume)
            print(json.dumps(result, indent=2, sort_keys=True))
        elif args.command == "summarize":
            summary = harness.export_summary(args.run_dir)
            out = Path(args.run_dir) / "summary.json"
            existing = {}
            if out.exists():
                existing = json.loads(out.read_text())
            for key in ("wall_clock_s", "mode"):
                if key in existing:
                    summary[key] = existing[key]
            out.write_text(json.dumps(summary, indent=2, sort_keys=True))
            print(json.dumps(summary, indent=2, sort_keys=True))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
