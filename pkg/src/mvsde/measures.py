"""Empirical measures, their moments, and transport-distance surrogates.

The dual metric used by the underlying theory is taken over test functions
with unit weighted-sup plus Lipschitz norm; every such function is
1-Lipschitz, so the metric is bounded above by the 1-Wasserstein distance.
All estimates consumed downstream bound that metric from above, which makes
W1 (computed exactly where cheap) and paired-coupling bounds sound
surrogates.  Equality with W1 is never assumed anywhere.

Modes of :func:`rho_upper`:

* d == 1, equal sizes: exact W1 by sorted matching,
* d >= 2, equal sizes up to ``assignment_cutoff``: exact W1 by optimal
  assignment (uniform weights make a permutation optimal),
* otherwise: the paired-sample coupling bound ``mean |x_i - y_i|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch, GridMismatch, SizeMismatch

ASSIGNMENT_CUTOFF = 64


class EmpiricalMeasure:
    """Uniform atomic measure on N particle positions (an N x d array)."""

    __slots__ = ("points",)

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must be a nonempty N x d array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("measure atoms must be finite")
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def __repr__(self):
        return f"EmpiricalMeasure(n={self.n}, d={self.d})"


def second_moment_norm(mu: EmpiricalMeasure) -> float:
    """Mean squared norm of the atoms, i.e. int |x|^2 mu(dx)."""
    return float(np.mean(np.sum(mu.points**2, axis=1)))


def _check_dims(mu: EmpiricalMeasure, nu: EmpiricalMeasure):
    if mu.d != nu.d:
        raise DimensionMismatch(f"measure dimensions differ: {mu.d} vs {nu.d}")


def rho_upper(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    mode: str = "auto",
    assignment_cutoff: int = ASSIGNMENT_CUTOFF,
) -> float:
    """Computable upper bound on the dual metric between two measures.

    ``mode`` is one of ``auto``, ``sorted``, ``assignment``, ``paired``;
    ``auto`` picks the tightest exact mode available.  All modes require
    equal particle counts.
    """
    _check_dims(mu, nu)
    if mu.n != nu.n:
        raise SizeMismatch(f"particle counts differ: {mu.n} vs {nu.n}")
    if mode == "auto":
        if mu.d == 1:
            mode = "sorted"
        elif mu.n <= assignment_cutoff:
            mode = "assignment"
        else:
            mode = "paired"

    if mode == "sorted":
        if mu.d != 1:
            raise DimensionMismatch("sorted mode is for one-dimensional measures")
        x = np.sort(mu.points[:, 0])
        y = np.sort(nu.points[:, 0])
        return float(np.mean(np.abs(x - y)))
    if mode == "assignment":
        cost = np.linalg.norm(mu.points[:, None, :] - nu.points[None, :, :], axis=-1)
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].mean())
    if mode == "paired":
        return float(np.mean(np.linalg.norm(mu.points - nu.points, axis=-1)))
    raise ValueError(f"unknown mode {mode!r}")


def coupled_moment_distance(x, y) -> float:
    """Root mean squared particle displacement between coupled ensembles.

    Dominates the paired ``rho_upper`` bound by Jensen's inequality.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.ndim == 1:
        xa = xa[:, None]
    if ya.ndim == 1:
        ya = ya[:, None]
    if xa.shape != ya.shape:
        raise SizeMismatch(f"ensemble shapes differ: {xa.shape} vs {ya.shape}")
    return float(np.sqrt(np.mean(np.sum((xa - ya) ** 2, axis=-1))))


class MeasureFlow:
    """A time-indexed family of empirical measures on a common grid.

    Positions are stored densely as a (K+1, N, d) array; the grid must be
    strictly increasing.  Flows compare only on identical grids.
    """

    __slots__ = ("grid", "positions")

    def __init__(self, grid, positions):
        grid = np.asarray(grid, dtype=float)
        pos = np.asarray(positions, dtype=float)
        if pos.ndim == 2:
            pos = pos[:, :, None]
        if grid.ndim != 1 or pos.shape[0] != grid.shape[0]:
            raise GridMismatch("one measure required per grid point")
        if grid.shape[0] > 1 and np.any(np.diff(grid) <= 0):
            raise GridMismatch("grid must be strictly increasing")
        self.grid = grid
        self.positions = pos

    @property
    def n_times(self) -> int:
        return self.grid.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[2]

    def measure_at(self, k: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.positions[k])

    def measures(self):
        return [self.measure_at(k) for k in range(self.n_times)]

    @classmethod
    def constant(cls, grid, mu: EmpiricalMeasure) -> "MeasureFlow":
        grid = np.asarray(grid, dtype=float)
        pos = np.broadcast_to(mu.points, (grid.shape[0],) + mu.points.shape).copy()
        return cls(grid, pos)


def flow_distance(flow_a: MeasureFlow, flow_b: MeasureFlow, mode: str = "auto") -> float:
    """Sup over grid times of :func:`rho_upper` between the two flows."""
    if flow_a.grid.shape != flow_b.grid.shape or not np.array_equal(
        flow_a.grid, flow_b.grid
    ):
        raise GridMismatch("flows live on different time grids")
    best = 0.0
    for k in range(flow_a.n_times):
        dist = rho_upper(flow_a.measure_at(k), flow_b.measure_at(k), mode=mode)
        if dist > best:
            best = dist
    return best


@dataclass(frozen=True)
class FlowStats:
    """Per-time first and second moments of a flow (used in reports)."""

    grid: np.ndarray
    mean: np.ndarray
    second_moment: np.ndarray


def flow_stats(flow: MeasureFlow) -> FlowStats:
    mean = flow.positions.mean(axis=1)
    second = np.mean(np.sum(flow.positions**2, axis=2), axis=1)
    return FlowStats(grid=flow.grid, mean=mean, second_moment=second)
