"""Flat PPO on a door-free 7x7 room: a check of the learner on its own.

With no door there is nothing to manipulate, so a working PPO should learn to
walk to the goal within a few hundred thousand env steps.  Each seed stops as
soon as a greedy evaluation over 100 episodes reaches 95% success.

Run:  python demos/04_flat_ppo_sanity.py [config] [out_dir]
      (defaults: configs/flat_toy7_nodoor.json, the out_dir stored in it)
The run directory is what tests/test_acceptance.py inspects.
"""

import json
import logging
import sys
import time
from pathlib import Path

from hrlnav.harness import load_config, train

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

root = Path(__file__).resolve().parent.parent
cfg = load_config(sys.argv[1] if len(sys.argv) > 1 else root / "configs" / "flat_toy7_nodoor.json")
if len(sys.argv) > 2:
    cfg = cfg.replace(out_dir=sys.argv[2])
elif not Path(cfg.out_dir).is_absolute():
    cfg = cfg.replace(out_dir=str(root / cfg.out_dir))


def progress(trainer, rec):
    if "eval" in rec:
        ev = rec["eval"]
        print(f"  update {rec['update']:4d}  env steps {rec['env_steps']:7d}  greedy success {ev['success_rate']:.2f}  length {ev['mean_length']:.1f}")


t0 = time.perf_counter()
results = train(cfg, callback=progress)
wall = time.perf_counter() - t0
passed = [r.seed for r in results if r.best_eval and r.best_eval["success_rate"] >= 0.95]
print(f"\n{len(passed)}/{len(results)} seeds reached 95% greedy success in {wall / 60:.1f} min: {passed}")
(Path(cfg.out_dir) / "summary.json").write_text(
    json.dumps({"wall_seconds": wall, "passed_seeds": passed, "seeds": [r.seed for r in results]}, indent=2) + "\n"
)
