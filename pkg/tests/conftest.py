"""Shared helpers for the test suite."""

import numpy as np

from mvsde.solver import SchemeConfig, TrajectoryRecord

ORDER_FLOOR = 1e-12


def empirical_order(hs, errors, floor=ORDER_FLOOR):
    """Observed convergence order from a log-log fit.

    When every error sits at the rounding floor the scheme resolved the
    problem exactly and any order is attained; report +inf in that case.
    """
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if np.all(errors <= floor):
        return np.inf
    clipped = np.maximum(errors, floor)
    slope, _ = np.polyfit(np.log(hs), np.log(clipped), 1)
    return float(slope)


def synthetic_trajectory(grid, x_values, seed=0):
    """Wrap a deterministic path (T,) or ensemble (T, N) into a record so
    the fitting utilities can be tested against closed forms."""
    grid = np.asarray(grid, dtype=float)
    x = np.asarray(x_values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    x = x[:, :, None]
    n_steps, n_particles = x.shape[0] - 1, x.shape[1]
    config = SchemeConfig(
        h=float(grid[1] - grid[0]),
        N=n_particles,
        T=float(grid[-1]),
        seed=seed,
        initial=float(x[0, 0, 0]),
    )
    zeros_k = np.zeros_like(x)
    return TrajectoryRecord(
        grid=grid,
        X=x,
        K=zeros_k,
        k_variation=np.zeros((n_steps + 1, n_particles)),
        dK=np.zeros((n_steps, n_particles, 1)),
        dW=np.zeros((n_steps, n_particles, 1)),
        seed=seed,
        config=config,
    )
