"""Command-line entry point: ``hrlnav train|eval|analyze|oracle``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import gridworld as gw
from .analysis import door_preference, embodiment_heatmap, export_curves, export_heatmap, load_episodes
from .config import ALGORITHMS, ConfigError, RunConfig, load_config
from .train import TrainingDiverged, evaluate_checkpoint, train


def _layout(spec: str) -> gw.GridLayout:
    p = Path(spec)
    return gw.load_layout(p) if p.is_file() else gw.builtin_layout(spec)


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seeds"] = tuple(args.seed)
    if args.algo:
        changes["algorithm"] = args.algo
    if args.out:
        changes["out_dir"] = args.out
    if args.updates:
        changes["total_updates"] = args.updates
    if args.layout:
        changes["layout"] = args.layout
    cfg = cfg.replace(**changes).validate()
    try:
        results = train(cfg)
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    for r in results:
        best = r.best_eval or {}
        print(f"seed {r.seed}: {r.updates} updates, {r.env_steps} env steps, best eval success {best.get('success_rate', float('nan')):.3f} -> {r.run_dir}")
    return 0


def cmd_eval(args) -> int:
    layout = _layout(args.layout) if args.layout else None
    report = evaluate_checkpoint(args.checkpoint, args.episodes, deterministic=not args.stochastic, seed=args.seed, layout=layout)
    summary = report.summary()
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.episodes_out:
        with open(args.episodes_out, "w") as f:
            for e in report.episodes:
                f.write(json.dumps(e, sort_keys=True) + "\n")
    return 0


def cmd_analyze(args) -> int:
    src = Path(args.inp)
    if args.what == "curves":
        paths = sorted(src.rglob("metrics.jsonl")) if src.is_dir() else [src]
        if not paths:
            print(f"error: no metrics.jsonl under {src}", file=sys.stderr)
            return 2
        rows = export_curves(paths, args.out)
        print(f"{len(rows)} updates from {len(paths)} seed log(s) -> {args.out}")
        return 0
    episodes = load_episodes(src)
    layout = _layout(args.layout)
    usage = embodiment_heatmap(episodes, layout.k)
    out = Path(args.out)
    paths = export_heatmap(usage, out.with_suffix("") if out.suffix == ".csv" else out)
    at_door, far = door_preference(usage, layout.door_front_cell, layout.door_cell)
    print(f"{int(usage.counts.sum())} decisions; BaseArm at door front {at_door:.3f}, far from door {far:.3f}")
    for p in paths:
        print(p)
    return 0


def cmd_oracle(args) -> int:
    layout = _layout(args.layout)
    steps = []
    for x, y in layout.left_room_cells:
        for h in gw.Heading:
            n = gw.optimal_steps(layout, gw.AgentPose(x, y, h))
            steps.append(n)
            if args.verbose:
                print(f"{x} {y} {h.name} {n}")
    reachable = [s for s in steps if s is not None]
    print(f"starts {len(steps)}  unreachable {len(steps) - len(reachable)}  mean {np.mean(reachable):.4f}  min {min(reachable)}  max {max(reachable)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hrlnav", description="Hierarchical RL for interactive navigation on a grid world.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one or more seeds")
    t.add_argument("--config", help="JSON run config (defaults used when omitted)")
    t.add_argument("--seed", type=int, action="append", help="seed; repeat for several")
    t.add_argument("--algo", choices=ALGORITHMS)
    t.add_argument("--out", help="output directory")
    t.add_argument("--updates", type=int, help="override total update cycles")
    t.add_argument("--layout", help="builtin layout name or layout file")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--stochastic", action="store_true", help="sample actions instead of taking the mode")
    e.add_argument("--seed", type=int, help="evaluation seed (default: the run's evaluation stream)")
    e.add_argument("--layout", help="evaluate on another layout of the same size")
    e.add_argument("--episodes-out", help="write per-episode records (JSON lines)")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("analyze", help="aggregate curves or build embodiment heatmaps")
    a.add_argument("what", choices=("curves", "heatmap"))
    a.add_argument("--in", dest="inp", required=True, help="run directory or file")
    a.add_argument("--out", required=True, help="CSV path (heatmap: prefix, one file per embodiment)")
    a.add_argument("--layout", default="toy11", help="layout for heatmap geometry")
    a.set_defaults(func=cmd_analyze)

    o = sub.add_parser("oracle", help="shortest-path steps from every start pose")
    o.add_argument("--layout", required=True)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, gw.LayoutError, FileNotFoundError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
