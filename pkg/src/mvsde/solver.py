"""Interacting-particle solver with resolvent splitting.

The dynamics ``dX in -A(X)dt + b(X, law)dt + sigma(X, law)dW`` are
discretized by an explicit Euler-Maruyama step for the drift and diffusion
followed by a backward (resolvent) step for the multivalued part:

    Y_i   = X_i + h*b(X_i, mu) + sqrt(h)*sigma(X_i, mu) @ z_i
    X_i'  = J_h(Y_i)
    dK_i  = Y_i - X_i'          (an element of h*A(X_i'))

so the constraint increments are exact resolvent residuals and the
pair-wise admissibility inequality holds step by step.  The measure slot
is either the ensemble's own empirical law (``simulate``) or an external
flow (``solve_frozen_flow``), which is what the fixed-point iteration
``picard`` drives to self-consistency.

Coefficients are evaluated batched: ``b(X, mu)`` receives the full
(N, d) position block and must return (N, d) or broadcastable (d,);
``sigma(X, mu)`` returns (N, d, m) or broadcastable (d, m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import noise as noise_mod
from .errors import (
    CoefficientBlowup,
    GridMismatch,
    NotConverged,
    StateBlowup,
    ZeroDenominator,
)
from .measures import EmpiricalMeasure, MeasureFlow, coupled_moment_distance, flow_distance
from .operators import MonotoneOperator

DEFAULT_BLOWUP_THRESHOLD = 1e8


@dataclass(frozen=True)
class Coefficients:
    """Drift and diffusion of the mean-field equation.

    ``growth_constant`` and ``lipschitz_constant`` are optional metadata
    (linear-growth and Lipschitz moduli) carried along for reports.
    """

    d: int
    m: int
    b: Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]
    sigma: Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]
    growth_constant: Optional[float] = None
    lipschitz_constant: Optional[float] = None
    label: str = "coefficients"


InitialSpec = Union[float, np.ndarray, dict]


@dataclass(frozen=True)
class SchemeConfig:
    """Step size, particle count, horizon, seed and initial condition.

    ``initial`` is either a deterministic point (scalar or length-d array)
    or a sampler spec ``{"kind": "normal", "mean": ..., "std": ...}``.
    The horizon must be an integer multiple of the step size (checked to
    within a few ulp).
    """

    h: float
    N: int
    T: float
    seed: int
    initial: InitialSpec = 0.0
    blowup_threshold: float = DEFAULT_BLOWUP_THRESHOLD

    def __post_init__(self):
        if not self.h > 0.0:
            raise ValueError(f"step size must be > 0, got {self.h}")
        if self.N < 1:
            raise ValueError(f"particle count must be >= 1, got {self.N}")
        if self.T < self.h:
            raise ValueError(f"horizon {self.T} must be at least one step {self.h}")
        ratio = self.T / self.h
        if abs(ratio - round(ratio)) > 4 * math.ulp(ratio):
            raise ValueError(
                f"horizon {self.T} is not an integer multiple of step size {self.h}"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.h))

    def grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.h


def initial_positions(config: SchemeConfig, d: int) -> np.ndarray:
    """Materialize the initial ensemble for a configuration."""
    init = config.initial
    if isinstance(init, dict):
        kind = init.get("kind", "point")
        if kind == "point":
            value = np.broadcast_to(np.atleast_1d(np.asarray(init["value"], float)), (d,))
            return np.tile(value, (config.N, 1))
        if kind == "normal":
            rng = noise_mod.initial_rng(config.seed)
            mean = np.broadcast_to(np.atleast_1d(np.asarray(init.get("mean", 0.0), float)), (d,))
            std = float(init.get("std", 1.0))
            return mean + std * rng.standard_normal((config.N, d))
        raise ValueError(f"unknown initial kind {kind!r}")
    value = np.broadcast_to(np.atleast_1d(np.asarray(init, dtype=float)), (d,))
    return np.tile(value, (config.N, 1))


def _eval_drift(coeffs: Coefficients, x: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
    out = np.asarray(coeffs.b(x, mu), dtype=float)
    out = np.broadcast_to(out, x.shape)
    if not np.all(np.isfinite(out)):
        raise CoefficientBlowup(f"{coeffs.label}: drift returned non-finite values")
    return out


def _eval_diffusion(coeffs: Coefficients, x: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
    out = np.asarray(coeffs.sigma(x, mu), dtype=float)
    out = np.broadcast_to(out, (x.shape[0], coeffs.d, coeffs.m))
    if not np.all(np.isfinite(out)):
        raise CoefficientBlowup(f"{coeffs.label}: diffusion returned non-finite values")
    return out


def step(
    op: MonotoneOperator,
    coeffs: Coefficients,
    x: np.ndarray,
    k: np.ndarray,
    k_variation: np.ndarray,
    mu: EmpiricalMeasure,
    h: float,
    noise: np.ndarray,
    blowup_threshold: float = DEFAULT_BLOWUP_THRESHOLD,
):
    """One splitting step for the whole ensemble.

    Returns ``(x_next, k_next, k_variation_next, dk, dw)`` where
    ``dw = sqrt(h) * noise`` is the Brownian increment actually used.
    """
    drift = _eval_drift(coeffs, x, mu)
    diffusion = _eval_diffusion(coeffs, x, mu)
    dw = math.sqrt(h) * noise
    y = x + h * drift + np.einsum("ndm,nm->nd", diffusion, dw)
    x_next = op.resolvent(y, h)
    dk = y - x_next
    if np.max(np.abs(x_next)) > blowup_threshold:
        raise StateBlowup(
            f"ensemble norm exceeded blow-up threshold {blowup_threshold:g}"
        )
    k_next = k + dk
    k_variation_next = k_variation + np.linalg.norm(dk, axis=-1)
    return x_next, k_next, k_variation_next, dk, dw


@dataclass(frozen=True)
class TrajectoryRecord:
    """Full record of one ensemble run.

    Arrays are frozen (read-only) once returned: X and K have shape
    (n_steps+1, N, d), the per-step increments dK and dW have shape
    (n_steps, N, d) and (n_steps, N, m).  ``k_variation`` accumulates the
    per-particle total variation of K and is nondecreasing in time.
    """

    grid: np.ndarray
    X: np.ndarray
    K: np.ndarray
    k_variation: np.ndarray
    dK: np.ndarray
    dW: np.ndarray
    seed: int
    config: SchemeConfig

    @property
    def n_steps(self) -> int:
        return self.dK.shape[0]

    @property
    def flow(self) -> MeasureFlow:
        return MeasureFlow(self.grid, self.X)

    def measure_at(self, idx: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.X[idx])

    def second_moments(self) -> np.ndarray:
        return np.mean(np.sum(self.X**2, axis=2), axis=1)

    def means(self) -> np.ndarray:
        return self.X.mean(axis=1)


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def _run(
    op: MonotoneOperator,
    coeffs: Coefficients,
    config: SchemeConfig,
    measure_for_step,
    noise: Optional[np.ndarray],
) -> TrajectoryRecord:
    n = config.n_steps
    if noise is None:
        noise = noise_mod.gaussian_increments(config.seed, n, config.N, coeffs.m)
    if noise.shape != (n, config.N, coeffs.m):
        raise ValueError(
            f"noise tensor shape {noise.shape} != {(n, config.N, coeffs.m)}"
        )
    d = coeffs.d
    if op.dimension != d:
        raise ValueError(f"operator dimension {op.dimension} != coefficients {d}")

    x = op.domain_projection(initial_positions(config, d))
    k = np.zeros_like(x)
    kvar = np.zeros(config.N)

    xs = np.empty((n + 1, config.N, d))
    ks = np.empty_like(xs)
    kvars = np.empty((n + 1, config.N))
    dks = np.empty((n, config.N, d))
    dws = np.empty((n, config.N, coeffs.m))
    xs[0], ks[0], kvars[0] = x, k, kvar

    for i in range(n):
        mu = measure_for_step(i, x)
        x, k, kvar, dk, dw = step(
            op, coeffs, x, k, kvar, mu, config.h, noise[i], config.blowup_threshold
        )
        xs[i + 1], ks[i + 1], kvars[i + 1] = x, k, kvar
        dks[i], dws[i] = dk, dw

    _freeze(xs, ks, kvars, dks, dws)
    return TrajectoryRecord(
        grid=config.grid(),
        X=xs,
        K=ks,
        k_variation=kvars,
        dK=dks,
        dW=dws,
        seed=config.seed,
        config=config,
    )


def simulate(
    op: MonotoneOperator,
    coeffs: Coefficients,
    config: SchemeConfig,
    noise: Optional[np.ndarray] = None,
) -> TrajectoryRecord:
    """Self-consistent run: the measure slot holds the ensemble's own
    empirical law, refreshed every step.  Deterministic given the seed."""
    return _run(op, coeffs, config, lambda i, x: EmpiricalMeasure(x), noise)


def solve_frozen_flow(
    op: MonotoneOperator,
    coeffs: Coefficients,
    frozen: MeasureFlow,
    config: SchemeConfig,
    noise: Optional[np.ndarray] = None,
) -> TrajectoryRecord:
    """Run with the measure slot frozen to an external flow.

    The frozen flow must live on the scheme grid.  An explicit noise
    tensor lets fixed-point iterations reuse common random numbers.
    """
    grid = config.grid()
    if frozen.grid.shape != grid.shape or not np.allclose(
        frozen.grid, grid, rtol=0.0, atol=1e-12
    ):
        raise GridMismatch("frozen flow grid differs from the scheme grid")
    measures = [frozen.measure_at(i) for i in range(frozen.n_times)]
    return _run(op, coeffs, config, lambda i, x: measures[i], noise)


@dataclass(frozen=True)
class PicardDiagnostics:
    deltas: tuple
    iterations: int
    converged: bool
    tol: float


def picard(
    op: MonotoneOperator,
    coeffs: Coefficients,
    config: SchemeConfig,
    tol: float = 1e-4,
    max_iter: int = 20,
    strict: bool = False,
    iterate_hook: Optional[Callable[[int, MeasureFlow], None]] = None,
):
    """Fixed-point iteration on the measure flow.

    Starting from the constant-in-time law of the initial condition, each
    sweep replaces the flow by the law flow of the frozen-coefficient run,
    reusing one common noise tensor.  Stops when the flow distance between
    successive iterates drops below ``tol``.  With ``strict=True``
    non-convergence raises :class:`NotConverged` instead of returning a
    flagged diagnostics record.
    """
    if not tol > 0.0:
        raise ValueError("tolerance must be positive")
    n = config.n_steps
    shared_noise = noise_mod.gaussian_increments(config.seed, n, config.N, coeffs.m)
    grid = config.grid()
    x0 = op.domain_projection(initial_positions(config, coeffs.d))
    flow = MeasureFlow.constant(grid, EmpiricalMeasure(x0))

    deltas = []
    converged = False
    for sweep in range(1, max_iter + 1):
        traj = solve_frozen_flow(op, coeffs, flow, config, noise=shared_noise)
        new_flow = traj.flow
        delta = flow_distance(new_flow, flow)
        deltas.append(delta)
        flow = new_flow
        if iterate_hook is not None:
            iterate_hook(sweep, flow)
        if delta < tol:
            converged = True
            break
    diagnostics = PicardDiagnostics(
        deltas=tuple(deltas), iterations=len(deltas), converged=converged, tol=tol
    )
    if strict and not converged:
        raise NotConverged(
            f"no fixed point after {len(deltas)} sweeps (last delta {deltas[-1]:.3g})",
            deltas,
        )
    return flow, diagnostics


def contraction_ratio(
    op: MonotoneOperator,
    coeffs: Coefficients,
    config: SchemeConfig,
    flow_a: MeasureFlow,
    flow_b: MeasureFlow,
) -> float:
    """Observed one-sweep contraction factor between two measure flows.

    Both frozen runs share the same noise and initial draw.  The numerator
    is the root mean square of the per-particle sup-in-time displacement,
    which dominates the flow distance of the images; the denominator is
    the flow distance of the inputs.
    """
    denom = flow_distance(flow_a, flow_b)
    if denom == 0.0:
        raise ZeroDenominator("input flows coincide on the grid")
    shared_noise = noise_mod.gaussian_increments(
        config.seed, config.n_steps, config.N, coeffs.m
    )
    traj_a = solve_frozen_flow(op, coeffs, flow_a, config, noise=shared_noise)
    traj_b = solve_frozen_flow(op, coeffs, flow_b, config, noise=shared_noise)
    sup_disp = np.max(np.linalg.norm(traj_a.X - traj_b.X, axis=-1), axis=0)
    numer = float(np.sqrt(np.mean(sup_disp**2)))
    return numer / denom


@dataclass(frozen=True)
class MomentReport:
    sup_second_moment: float
    initial_spread: float
    horizon: float
    interior_norm_sq: float


def moment_monitor(traj: TrajectoryRecord, a) -> MomentReport:
    """Sup-in-time ensemble second moment plus the ingredients of the
    a-priori moment bound (initial spread around the interior point, the
    horizon, and |a|^2).  The bound's constants are not computable, so
    nothing is asserted here; tests check finiteness and monotonicity."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    second = traj.second_moments()
    spread = float(np.mean(np.sum((traj.X[0] - a) ** 2, axis=-1)))
    return MomentReport(
        sup_second_moment=float(second.max()),
        initial_spread=spread,
        horizon=float(traj.grid[-1]),
        interior_norm_sq=float(np.sum(a**2)),
    )
