"""CSV and JSON export with byte-reproducible number formatting.

Floats are written with Python's shortest round-trip representation
(``repr``), so identical runs produce identical bytes regardless of
thread count or platform ordering.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .measures import EmpiricalMeasure, MeasureFlow
from .solver import TrajectoryRecord


def _fmt(value) -> str:
    return repr(float(value))


def trajectory_to_csv(traj: TrajectoryRecord, path) -> None:
    """Rows ordered by time then particle: t, particle_id, x_*, k_*, k_variation."""
    d = traj.X.shape[2]
    header = (
        ["t", "particle_id"]
        + [f"x_{j + 1}" for j in range(d)]
        + [f"k_{j + 1}" for j in range(d)]
        + ["k_variation"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, t in enumerate(traj.grid):
            for i in range(traj.X.shape[1]):
                row = (
                    [_fmt(t), str(i)]
                    + [_fmt(v) for v in traj.X[k, i]]
                    + [_fmt(v) for v in traj.K[k, i]]
                    + [_fmt(traj.k_variation[k, i])]
                )
                writer.writerow(row)


def flow_to_csv(flow: MeasureFlow, path) -> None:
    d = flow.d
    header = ["t", "particle_id"] + [f"x_{j + 1}" for j in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, t in enumerate(flow.grid):
            for i in range(flow.positions.shape[1]):
                writer.writerow([_fmt(t), str(i)] + [_fmt(v) for v in flow.positions[k, i]])


def measure_to_csv(mu: EmpiricalMeasure, path) -> None:
    header = [f"x_{j + 1}" for j in range(mu.d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in mu.points:
            writer.writerow([_fmt(v) for v in row])


def moments_to_csv(grid, moments: dict, path) -> None:
    """Per-time scalar curves, e.g. the ensemble moment and a bound."""
    names = list(moments)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + names)
        for k, t in enumerate(grid):
            writer.writerow([_fmt(t)] + [_fmt(moments[name][k]) for name in names])


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def write_json(data: dict, path) -> None:
    Path(path).write_text(json.dumps(_jsonify(data), indent=2, sort_keys=True) + "\n")


def trajectory_summary(traj: TrajectoryRecord) -> dict:
    cfg = traj.config
    return {
        "seed": traj.seed,
        "config": {
            "h": cfg.h,
            "N": cfg.N,
            "T": cfg.T,
            "seed": cfg.seed,
            "initial": cfg.initial if not isinstance(cfg.initial, np.ndarray) else cfg.initial.tolist(),
            "blowup_threshold": cfg.blowup_threshold,
        },
        "grid": traj.grid,
        "mean": traj.means(),
        "second_moment": traj.second_moments(),
        "k_variation_final": traj.k_variation[-1],
    }
