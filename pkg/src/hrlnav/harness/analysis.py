"""Post-hoc analysis: embodiment usage maps and learning-curve aggregation."""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..hrl import Embodiment
from .train import read_metrics

__all__ = [
    "EmbodimentUsageMap",
    "embodiment_heatmap",
    "load_episodes",
    "export_heatmap",
    "door_preference",
    "aggregate_curves",
    "export_curves",
    "CURVE_METRICS",
]

CURVE_METRICS = ("mean_reward", "success_rate", "mean_length", "mean_energy")


@dataclasses.dataclass
class EmbodimentUsageMap:
    counts: np.ndarray  # (3, k, k) indexed [embodiment, y, x]

    @property
    def k(self) -> int:
        return self.counts.shape[1]

    @property
    def visits(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def probabilities(self) -> np.ndarray:
        """Per-cell selection probabilities; NaN where no decision was made."""
        total = self.visits
        with np.errstate(invalid="ignore", divide="ignore"):
            p = self.counts / total
        p[:, total == 0] = np.nan
        return p

    def probability(self, embodiment: Embodiment, cell) -> float:
        x, y = cell
        return float(self.probabilities()[embodiment, y, x])


def embodiment_heatmap(episodes: Iterable[dict], k: int) -> EmbodimentUsageMap:
    """Count HL embodiment choices by the agent's cell at decision time."""
    counts = np.zeros((len(Embodiment), k, k), dtype=np.int64)
    for ep in episodes:
        for d in ep.get("decisions", ()):
            x, y = d["cell"]
            counts[int(d["embodiment"]), y, x] += 1
    return EmbodimentUsageMap(counts)


def load_episodes(path) -> list[dict]:
    """Episode records from a JSON-lines file, or from every ``*episodes.jsonl`` under a directory."""
    path = Path(path)
    files = sorted(path.rglob("*episodes.jsonl")) if path.is_dir() else [path]
    if not files:
        raise FileNotFoundError(f"no episode files under {path}")
    out = []
    for f in files:
        with open(f) as fh:
            out.extend(json.loads(line) for line in fh if line.strip())
    return out


def export_heatmap(usage: EmbodimentUsageMap, out_prefix) -> list[Path]:
    """One CSV grid per embodiment, ``<prefix>_<NAME>.csv``; rows are y, columns x, blank = unvisited."""
    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    probs = usage.probabilities()
    paths = []
    for e in Embodiment:
        p = out_prefix.with_name(f"{out_prefix.name}_{e.name}.csv")
        with open(p, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["y"] + [f"x{x}" for x in range(usage.k)])
            for y in range(usage.k):
                w.writerow([y] + ["" if np.isnan(v) else f"{v:.6g}" for v in probs[e, y]])
        paths.append(p)
    return paths


def door_preference(usage: EmbodimentUsageMap, door_front, door_cell, min_distance: int = 3) -> tuple[float, float]:
    """BaseArm probability at ``door_front`` and its mean over visited cells ``min_distance`` or more from the door."""
    probs = usage.probabilities()[Embodiment.BASE_ARM]
    dx, dy = door_cell
    far = [probs[y, x] for y in range(usage.k) for x in range(usage.k) if abs(x - dx) + abs(y - dy) >= min_distance and not np.isnan(probs[y, x])]
    fx, fy = door_front
    return float(probs[fy, fx]), float(np.mean(far)) if far else float("nan")


def aggregate_curves(logs: Sequence[list[dict]], metrics: Sequence[str] = CURVE_METRICS) -> list[dict]:
    """Align per-update records across seeds and reduce each metric to mean/min/max.

    Missing or null values (no finished episode in that cycle) are skipped; a
    row with no value for a metric gets ``None`` for it.
    """
    by_update: dict[int, list[dict]] = {}
    for records in logs:
        for r in records:
            if "update" in r and "event" not in r:
                by_update.setdefault(int(r["update"]), []).append(r)
    rows = []
    for u in sorted(by_update):
        recs = by_update[u]
        row = {"update": u, "env_steps": int(np.mean([r["env_steps"] for r in recs])), "seeds": len(recs)}
        for m in metrics:
            vals = [r[m] for r in recs if r.get(m) is not None]
            if vals:
                row[f"{m}_mean"], row[f"{m}_min"], row[f"{m}_max"] = float(np.mean(vals)), float(np.min(vals)), float(np.max(vals))
            else:
                row[f"{m}_mean"] = row[f"{m}_min"] = row[f"{m}_max"] = None
        rows.append(row)
    return rows


def export_curves(metrics_paths: Sequence, out_path, metrics: Sequence[str] = CURVE_METRICS) -> list[dict]:
    """Read per-seed metrics logs and write the aggregated curves as CSV."""
    logs = [read_metrics(p)[1] for p in metrics_paths]
    if not logs:
        raise ValueError("at least one metrics log is required")
    rows = aggregate_curves(logs, metrics)
    cols = ["update", "env_steps", "seeds"] + [f"{m}_{s}" for m in metrics for s in ("mean", "min", "max")]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({c: ("" if r[c] is None else r[c]) for c in cols})
    return rows
