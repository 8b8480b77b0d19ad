"""Look inside a finished training run.

Aggregates the learning curves across seeds, re-evaluates the best
checkpoint greedily from scratch, and prints where the high level chose each
embodiment.  A trained agent should move with the base alone through open
space and bring the arm in near the door.

Run:  python demos/06_analyze_run.py runs/acceptance/hrl4in_toy7
"""

import sys
from pathlib import Path

import numpy as np

from hrlnav import gridworld as gw
from hrlnav.harness import door_preference, embodiment_heatmap, evaluate_checkpoint, export_curves, export_heatmap
from hrlnav.harness.train import controller_from_checkpoint
from hrlnav.hrl import Embodiment

run = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/acceptance/hrl4in_toy7")
logs = sorted(run.rglob("metrics.jsonl"))
rows = export_curves(logs, run / "curves.csv")
print(f"{len(rows)} updates from {len(logs)} seed(s) -> {run / 'curves.csv'}")

ckpts = sorted(run.rglob("best.ckpt"))
if not ckpts:
    sys.exit("no best.ckpt yet")
reports = [(p, evaluate_checkpoint(p, 100)) for p in ckpts]
path, rep = max(reports, key=lambda pr: (pr[1].success_rate, -pr[1].mean_length))
for p, r in reports:
    print(f"{p.parent.name}: greedy success {r.success_rate:.2f}  length {r.mean_length:.1f}  optimal {r.mean_optimal_length:.1f}")
print(f"\nbest: {path}")
print(f"  length / optimal = {rep.mean_length / rep.mean_optimal_length:.2f}  energy {rep.mean_energy:.1f}")
if rep.embodiment_fractions is None:
    sys.exit(0)
print("  embodiment fractions:", {k: round(v, 3) for k, v in rep.embodiment_fractions.items()})

# decisions are logged with the agent's cell, so the heatmap comes from the eval episodes
_, layout, _ = controller_from_checkpoint(path)
usage = embodiment_heatmap(rep.episodes, layout.k)
export_heatmap(usage, run / "heatmap")
probs = usage.probabilities()[Embodiment.BASE_ARM]
print("\nBaseArm probability by cell (. = no decision there, # = wall, D = door):")
for y in range(layout.k):
    row = []
    for x in range(layout.k):
        if (x, y) == layout.door_cell:
            row.append("  D ")
        elif layout.cells[y, x] == gw.CellKind.WALL:
            row.append("  # ")
        elif np.isnan(probs[y, x]):
            row.append("  . ")
        else:
            row.append(f"{probs[y, x]:4.1f}")
    print(" ".join(row))
at_door, far = door_preference(usage, layout.door_front_cell, layout.door_cell)
print(f"\nat the door front {at_door:.2f} vs {far:.2f} averaged over cells 3+ steps from the door")
