"""The two-level agent end to end on the small 7x7 room (door opens in 2 slide-ups).

Seeds are trained one after another under a shared wall-clock budget.  A
seed stops early once a greedy evaluation over 100 episodes reaches 90%
success, and the whole run stops at the first seed that gets there, since
one solving seed is what we are after.  The high level stays frozen for
its first 500 update cycles while the low level learns to reach subgoals,
so nothing much happens to episode success before then.

Run:  python demos/05_hrl_small_room.py [config] [budget_minutes]
      (defaults: configs/hrl4in_toy7.json, 120)
"""

import json
import logging
import sys
import time
from pathlib import Path

from hrlnav.harness import load_config, save_config, train_seed

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

root = Path(__file__).resolve().parent.parent
cfg = load_config(sys.argv[1] if len(sys.argv) > 1 else root / "configs" / "hrl4in_toy7.json")
budget = 60 * float(sys.argv[2]) if len(sys.argv) > 2 else 2 * 3600
out = Path(cfg.out_dir)
if not out.is_absolute():
    out = root / out
out.mkdir(parents=True, exist_ok=True)
save_config(cfg, out / "config.json")

t0 = time.perf_counter()


def within_budget(trainer, rec):
    if "eval" in rec:
        ev = rec["eval"]
        print(
            f"  update {rec['update']:4d}  greedy success {ev['success_rate']:.2f}  length {ev['mean_length']:.1f}"
            f"  embodiments {ev['embodiment_fractions']}"
        )
    return time.perf_counter() - t0 < budget


summary = {"budget_seconds": budget, "seeds": [], "passed_seeds": []}
for seed in cfg.seeds:
    if time.perf_counter() - t0 >= budget:
        break
    res = train_seed(cfg, seed, out / f"seed_{seed}", within_budget)
    best = res.best_eval or {}
    print(f"seed {seed}: {res.updates} updates, best greedy success {best.get('success_rate', 0):.2f} at update {best.get('update')}")
    summary["seeds"].append(seed)
    if best.get("success_rate", 0) >= 0.9:
        summary["passed_seeds"].append(seed)
        break

summary["wall_seconds"] = time.perf_counter() - t0
(out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
print(json.dumps(summary))
