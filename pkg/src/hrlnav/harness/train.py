"""Training orchestration: one output directory per seed.

Layout of a run directory::

    <out_dir>/config.json                 effective configuration
    <out_dir>/seed_<n>/metrics.jsonl      header line, then one record per update cycle
    <out_dir>/seed_<n>/latest.ckpt        written every ``checkpoint_every`` cycles and at the end
    <out_dir>/seed_<n>/best.ckpt          best greedy evaluation so far
    <out_dir>/seed_<n>/best_eval_episodes.jsonl
    <out_dir>/seed_<n>/timing.json        wall-clock seconds (kept apart from the metrics)

Everything written to ``metrics.jsonl`` and the checkpoints is a function of
(config, seed) only.  Wall-clock timings go to the logger and to
``timing.json``, never to the metrics or checkpoints.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from pathlib import Path

import numpy as np

from .. import gridworld as gw
from ..flat import FlatTrainer, make_flat_policy
from ..hrl import Embodiment, HrlAgent, HrlTrainer, make_hl_policy, make_ll_policy
from ..nn import load_checkpoint, precision, save_checkpoint
from ..normalize import ObsBounds
from .config import RunConfig, save_config
from .evaluate import EvalReport, FlatController, HrlController, evaluate_controller

__all__ = [
    "METRICS_FORMAT",
    "METRICS_VERSION",
    "SeedResult",
    "TrainingDiverged",
    "MetricsWriter",
    "read_metrics",
    "train",
    "train_seed",
    "make_trainer",
    "eval_seed",
    "controller_from_checkpoint",
    "evaluate_checkpoint",
]

log = logging.getLogger(__name__)

METRICS_FORMAT = "hrlnav-metrics"
METRICS_VERSION = 1
CHECKPOINT_KIND = "hrlnav-run"
EVAL_STREAM = 1000  # spawn key reserved for evaluation starts


class TrainingDiverged(FloatingPointError):
    pass


@dataclasses.dataclass
class SeedResult:
    seed: int
    run_dir: Path
    updates: int
    env_steps: int
    best_eval: dict | None
    stopped_early: bool


def eval_seed(seed: int) -> np.random.SeedSequence:
    """Evaluation stream for a master seed, disjoint from the training streams."""
    return np.random.SeedSequence(seed, spawn_key=(EVAL_STREAM,))


class MetricsWriter:
    """Append-only JSON-lines log; each record is one ``write`` of one full line."""

    def __init__(self, path, header: dict):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._f = open(self.path, "w")
        self.write({"format": METRICS_FORMAT, "version": METRICS_VERSION, **header})

    def write(self, record: dict) -> None:
        self._f.write(json.dumps(record, sort_keys=True, allow_nan=True) + "\n")
        self._f.flush()
        os.fsync(self._f.fileno())

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> tuple[dict, list[dict]]:
    """Return ``(header, records)``; an incomplete final line is ignored."""
    header, records = None, []
    with open(path) as f:
        for line in f:
            if not line.endswith("\n"):
                break
            rec = json.loads(line)
            if header is None:
                if rec.get("format") != METRICS_FORMAT:
                    raise ValueError(f"{path}: not a metrics log")
                if rec.get("version") != METRICS_VERSION:
                    raise ValueError(f"{path}: unsupported metrics version {rec.get('version')}")
                header = rec
            else:
                records.append(rec)
    if header is None:
        raise ValueError(f"{path}: empty metrics log")
    return header, records


def make_trainer(cfg: RunConfig, layout: gw.GridLayout, seed: int):
    # the learning-rate decay horizon is the run length
    ppo = dataclasses.replace(cfg.ppo, total_updates=cfg.total_updates)
    if cfg.algorithm == "flat_ppo":
        return FlatTrainer(layout, ppo, cfg.net, n_envs=cfg.n_envs, seed=seed, random_goal=cfg.random_goal)
    return HrlTrainer(layout, cfg.hrl_config(), ppo, cfg.net, n_envs=cfg.n_envs, seed=seed, random_goal=cfg.random_goal)


def _controller(cfg: RunConfig, trainer, layout):
    bounds = ObsBounds.from_layout(layout)
    if isinstance(trainer, FlatTrainer):
        return FlatController(trainer.policy, bounds)
    return HrlController(HrlAgent(trainer.hl_policy, trainer.ll_policy, cfg.hrl_config(), bounds))


def _mean(values):
    return float(np.mean(values)) if len(values) else None


def _record(info: dict) -> dict:
    eps = info["episodes"]
    rec = {
        "update": int(info["update"]),
        "env_steps": int(info["env_steps"]),
        "episodes": len(eps),
        "mean_reward": _mean([e["return"] for e in eps]),
        "success_rate": _mean([float(e["success"]) for e in eps]),
        "mean_length": _mean([e["length"] for e in eps]),
        "mean_energy": _mean([e["energy"] for e in eps]),
        "ppo": {k: {n: float(v) for n, v in s.items()} for k, s in info["ppo"].items()},
    }
    if "embodiment_counts" in info:
        counts = np.asarray(info["embodiment_counts"], dtype=float)
        total = counts.sum()
        rec["embodiment"] = {e.name: (float(counts[e] / total) if total else None) for e in Embodiment}
        rec["hl_decisions"] = int(info["hl_decisions"])
        rec["subgoal_achieved_rate"] = float(info["subgoal_achieved_rate"])
        rec["mean_intrinsic_reward"] = float(info["mean_intrinsic_reward"])
    return rec


def _checkpoint_meta(cfg: RunConfig, layout: gw.GridLayout, trainer, seed: int, extra: dict | None = None) -> dict:
    meta = {
        "kind": CHECKPOINT_KIND,
        "algorithm": cfg.algorithm,
        "seed": seed,
        "update": trainer.update_index,
        "env_steps": trainer.env_steps,
        "config": cfg.to_dict(),
        "layout": gw.format_layout(layout),
    }
    meta.update(extra or {})
    return meta


def _better(report: EvalReport, best: dict | None) -> bool:
    if best is None:
        return True
    return (report.success_rate, -report.mean_length) > (best["success_rate"], -best["mean_length"])


def _write_episodes(path: Path, episodes: list[dict]) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as f:
        for e in episodes:
            f.write(json.dumps(e, sort_keys=True) + "\n")
    os.replace(tmp, path)


def train_seed(cfg: RunConfig, seed: int, run_dir, callback=None) -> SeedResult:
    """Train one seed into ``run_dir``.

    ``callback(trainer, record)`` runs after every cycle; returning ``False``
    stops training.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    layout = cfg.load_layout()
    best, stopped = None, False
    t0 = time.perf_counter()
    with precision(cfg.precision):
        trainer = make_trainer(cfg, layout, seed)
        with MetricsWriter(run_dir / "metrics.jsonl", {"algorithm": cfg.algorithm, "seed": seed, "layout": cfg.layout}) as mw:
            for u in range(cfg.total_updates):
                try:
                    info = trainer.train_cycle()
                except FloatingPointError as e:
                    meta = _checkpoint_meta(cfg, layout, trainer, seed, {"diverged": str(e)})
                    save_checkpoint(run_dir / "diverged.ckpt", trainer.checkpoint_arrays(), meta)
                    mw.write({"event": "diverged", "update": trainer.update_index, "error": str(e)})
                    raise TrainingDiverged(f"seed {seed} diverged at update {trainer.update_index}: {e}") from e
                rec = _record(info)
                last = u == cfg.total_updates - 1
                if cfg.eval_every and (u % cfg.eval_every == cfg.eval_every - 1 or last):
                    report = evaluate_controller(_controller(cfg, trainer, layout), layout, cfg.eval_episodes, eval_seed(seed))
                    rec["eval"] = report.summary()
                    if _better(report, best):
                        best = dict(rec["eval"], update=rec["update"])
                        save_checkpoint(run_dir / "best.ckpt", trainer.checkpoint_arrays(), _checkpoint_meta(cfg, layout, trainer, seed, {"eval": best}))
                        _write_episodes(run_dir / "best_eval_episodes.jsonl", report.episodes)
                    if cfg.stop_success is not None and report.success_rate >= cfg.stop_success:
                        stopped = True
                    log.info(
                        "seed %d update %d: eval success %.2f length %.1f",
                        seed, rec["update"], report.success_rate, report.mean_length,
                    )
                mw.write(rec)
                if (u + 1) % cfg.checkpoint_every == 0 or last or stopped:
                    save_checkpoint(run_dir / "latest.ckpt", trainer.checkpoint_arrays(), _checkpoint_meta(cfg, layout, trainer, seed))
                if callback is not None and callback(trainer, rec) is False:
                    stopped = True
                if stopped:
                    save_checkpoint(run_dir / "latest.ckpt", trainer.checkpoint_arrays(), _checkpoint_meta(cfg, layout, trainer, seed))
                    break
    wall = time.perf_counter() - t0
    (run_dir / "timing.json").write_text(json.dumps({"wall_seconds": wall, "updates": trainer.update_index}) + "\n")
    log.info("seed %d finished: %d updates in %.1f s", seed, trainer.update_index, wall)
    return SeedResult(seed, run_dir, trainer.update_index, trainer.env_steps, best, stopped)


def train(cfg: RunConfig, callback=None) -> list[SeedResult]:
    """Train every seed of ``cfg`` in turn; the effective config goes to ``out_dir/config.json``."""
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.json")
    return [train_seed(cfg, s, out / f"seed_{s}", callback) for s in cfg.seeds]


def controller_from_checkpoint(path):
    """Rebuild the policies stored in a run checkpoint.

    Returns ``(controller, layout, meta)``; raises ``KeyError``/``ValueError``
    when the stored arrays do not fit the recorded architecture.
    """
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != CHECKPOINT_KIND:
        raise ValueError(f"{path}: not a training checkpoint")
    cfg = RunConfig.from_dict(meta["config"])
    layout = gw.parse_layout(meta["layout"])
    bounds = ObsBounds.from_layout(layout)
    map_shape = (4, layout.k, layout.k)

    def params(prefix):
        tag = f"{prefix}/param/"
        return {k[len(tag):]: v for k, v in arrays.items() if k.startswith(tag)}

    with precision(cfg.precision):
        if cfg.algorithm == "flat_ppo":
            policy = make_flat_policy(map_shape, cfg.net, 0)
            policy.load_state_dict(params("flat"))
            controller = FlatController(policy, bounds)
        else:
            hcfg = cfg.hrl_config()
            hl = make_hl_policy(map_shape, hcfg, cfg.net, 0)
            ll = make_ll_policy(map_shape, cfg.net, 0)
            hl.load_state_dict(params("hl"))
            ll.load_state_dict(params("ll"))
            controller = HrlController(HrlAgent(hl, ll, hcfg, bounds))
    return controller, layout, meta


def evaluate_checkpoint(path, n_episodes: int = 100, deterministic: bool = True, seed=None, layout: gw.GridLayout | None = None) -> EvalReport:
    """Evaluate a run checkpoint; by default on its own layout and evaluation stream."""
    controller, own_layout, meta = controller_from_checkpoint(path)
    layout = layout or own_layout
    if (layout.k, layout.door_max) != (own_layout.k, own_layout.door_max):
        raise ValueError("layout size or door range differs from the checkpoint's")
    stream = eval_seed(int(meta["seed"])) if seed is None else seed
    return evaluate_controller(controller, layout, n_episodes, stream, deterministic)
