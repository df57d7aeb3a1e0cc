"""Empirical checks of the Lyapunov stability criteria.

Three hypothesis families are supported, differing in how the generator
inequality and the comparison sandwich are stated:

* ``strict``      -- integrated generator inequality <= 0 and
                     a1*m2 <= int F dmu <= a2*m2 (exponential decay),
* ``offset``      -- integrated inequality <= M1 and the sandwich with
                     offsets M2, M3 (ultimate boundedness),
* ``pointwise``   -- pointwise inequality <= 0 and radial comparison
                     gamma1(|x|) <= F <= gamma2(|x|) (a.s. stability).

All moment-bound checks apply a declared statistical slack: three
bootstrap standard errors of the ensemble moment plus an explicit O(h)
allowance carried by the scenario.  Almost-sure statements are only ever
estimated as multi-seed tail fractions; no probability-one claim is made.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .calculus import TestFunction, generator_at_points, k_condition_monitor
from .errors import DegenerateFit
from .measures import EmpiricalMeasure, second_moment_norm
from .solver import Coefficients, TrajectoryRecord

_MOMENT_FLOOR = 1e-30


@dataclass(frozen=True)
class LyapunovSpec:
    """A Lyapunov candidate together with its hypothesis constants."""

    F: TestFunction
    alpha: float
    a1: float = 1.0
    a2: float = 1.0
    M1: float = 0.0
    M2: float = 0.0
    M3: float = 0.0
    gamma1: Optional[Callable[[float], float]] = None
    gamma2: Optional[Callable[[float], float]] = None
    family: str = "strict"  # strict | offset | pointwise

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError("decay rate alpha must be positive")
        if not (self.a1 > 0.0 and self.a2 > 0.0 and self.a1 <= self.a2):
            raise ValueError("need 0 < a1 <= a2")
        if min(self.M1, self.M2, self.M3) < 0.0:
            raise ValueError("offsets M1, M2, M3 must be nonnegative")
        if self.family not in ("strict", "offset", "pointwise"):
            raise ValueError(f"unknown hypothesis family {self.family!r}")
        if self.family == "pointwise":
            for name, gamma in (("gamma1", self.gamma1), ("gamma2", self.gamma2)):
                if gamma is None:
                    raise ValueError(f"pointwise family requires {name}")
                grid = np.linspace(0.0, 4.0, 17)
                vals = np.array([gamma(r) for r in grid])
                if abs(vals[0]) > 1e-12 or np.any(np.diff(vals) <= 0.0):
                    raise ValueError(f"{name} must vanish at 0 and strictly increase")


@dataclass(frozen=True)
class CheckReport:
    name: str
    value: float
    threshold: float
    passed: bool


def dissipativity_check(
    spec: LyapunovSpec,
    coeffs: Coefficients,
    mu: EmpiricalMeasure,
    mode: str = "integrated",
    tol: float = 1e-12,
) -> CheckReport:
    """Generator inequality for one measure.

    ``integrated`` averages generator(F) + alpha*F over the atoms and
    compares against 0 (strict family) or M1 (offset family);
    ``pointwise`` takes the worst atom against 0.
    """
    atoms = mu.points
    gen = generator_at_points(spec.F, atoms, mu, coeffs)
    fvals = np.asarray(spec.F.phi(atoms, mu), dtype=float)
    combined = gen + spec.alpha * fvals
    if mode == "integrated":
        value = float(np.mean(combined))
        threshold = spec.M1 if spec.family == "offset" else 0.0
    elif mode == "pointwise":
        value = float(np.max(combined))
        threshold = 0.0
    else:
        raise ValueError(f"unknown dissipativity mode {mode!r}")
    scale = 1.0 + float(np.max(np.abs(fvals), initial=0.0))
    return CheckReport(
        name="dissipativity_check",
        value=value,
        threshold=threshold,
        passed=value <= threshold + tol * scale,
    )


@dataclass(frozen=True)
class ComparisonReport:
    lower: float
    middle: float
    upper: float
    passed: bool


def comparison_check(
    spec: LyapunovSpec, mu: EmpiricalMeasure, tol: float = 1e-10
) -> ComparisonReport:
    """Sandwich between the Lyapunov value and the second moment.

    For the radial (pointwise) family the sandwich is evaluated atom by
    atom; the report carries the tightest margins.
    """
    atoms = mu.points
    fvals = np.asarray(spec.F.phi(atoms, mu), dtype=float)
    if spec.family == "pointwise":
        radii = np.linalg.norm(atoms, axis=-1)
        lo = np.array([spec.gamma1(r) for r in radii])
        hi = np.array([spec.gamma2(r) for r in radii])
        passed = bool(np.all(fvals >= lo - tol) and np.all(fvals <= hi + tol))
        worst = int(np.argmin(np.minimum(fvals - lo, hi - fvals)))
        return ComparisonReport(
            lower=float(lo[worst]),
            middle=float(fvals[worst]),
            upper=float(hi[worst]),
            passed=passed,
        )
    m2 = second_moment_norm(mu)
    middle = float(np.mean(fvals))
    if spec.family == "offset":
        lower, upper = spec.a1 * m2 - spec.M2, spec.a2 * m2 + spec.M3
    else:
        lower, upper = spec.a1 * m2, spec.a2 * m2
    passed = lower - tol <= middle <= upper + tol
    return ComparisonReport(lower=lower, middle=middle, upper=upper, passed=passed)


@dataclass(frozen=True)
class DecayFit:
    beta_hat: float
    intercept: float
    r2: float


def decay_fit(traj: TrajectoryRecord, burn_in: float = 0.2) -> DecayFit:
    """Least-squares exponential rate of the ensemble second moment.

    Fits log m(t) against t for t past the burn-in fraction of the
    horizon and reports the negated slope.  Windows touching the moment
    floor raise :class:`DegenerateFit`.
    """
    m = traj.second_moments()
    t = traj.grid
    mask = t >= burn_in * t[-1]
    m_win, t_win = m[mask], t[mask]
    if np.any(m_win < _MOMENT_FLOOR):
        raise DegenerateFit("second moment vanishes on the fit window")
    y = np.log(m_win)
    slope, intercept = np.polyfit(t_win, y, 1)
    fitted = slope * t_win + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot < 1e-30 else 1.0 - ss_res / ss_tot
    return DecayFit(beta_hat=float(-slope), intercept=float(intercept), r2=r2)


def bootstrap_se_of_moments(
    values: np.ndarray, n_boot: int = 200, seed: int = 0
) -> np.ndarray:
    """Bootstrap standard error of per-time ensemble means.

    ``values`` has shape (T, N); particles are resampled with replacement
    via one multinomial weight matrix shared across times, which turns
    the whole bootstrap into a single matrix product.
    """
    t_len, n = values.shape
    rng = np.random.default_rng(seed)
    weights = rng.multinomial(n, np.full(n, 1.0 / n), size=n_boot) / n  # (B, N)
    boot_means = values @ weights.T  # (T, B)
    return boot_means.std(axis=1, ddof=1)


def _relative_slack(
    traj: TrajectoryRecord, bound: np.ndarray, c_h: float, n_boot: int, seed: int
) -> np.ndarray:
    sq = np.sum(traj.X**2, axis=2)  # (T, N)
    if traj.X.shape[1] > 1:
        se = bootstrap_se_of_moments(sq, n_boot=n_boot, seed=seed)
    else:
        se = np.zeros(traj.grid.shape[0])
    scale = np.maximum(bound, 1e-300)
    return 3.0 * se / scale + c_h * traj.config.h


@dataclass(frozen=True)
class GateReport:
    dissipativity_passed: bool
    k_condition_passed: bool
    failed_gate: Optional[str]


@dataclass(frozen=True)
class BoundReport:
    gates: GateReport
    max_violation: Optional[float]
    passed: Optional[bool]


def _run_gates(
    traj: TrajectoryRecord,
    spec: LyapunovSpec,
    coeffs: Coefficients,
    mode: str,
    gate_stride: int,
) -> GateReport:
    idx = np.unique(
        np.linspace(0, traj.grid.shape[0] - 1, gate_stride).round().astype(int)
    )
    diss_ok = all(
        dissipativity_check(spec, coeffs, traj.measure_at(i), mode=mode).passed
        for i in idx
    )
    k_ok = k_condition_monitor(traj, spec.F).passed
    failed = None
    if not diss_ok:
        failed = "dissipativity_check"
    elif not k_ok:
        failed = "k_condition_monitor"
    return GateReport(
        dissipativity_passed=diss_ok, k_condition_passed=k_ok, failed_gate=failed
    )


def exponential_bound_check(
    traj: TrajectoryRecord,
    spec: LyapunovSpec,
    coeffs: Coefficients,
    c_h: float = 0.0,
    n_boot: int = 200,
    gate_stride: int = 256,
) -> BoundReport:
    """Second-moment decay bound m(t) <= (a2/a1) e^{-alpha t} m(0).

    The theorem's hypotheses come first: the generator inequality and the
    constraint-increment condition are re-checked on this trajectory, and
    if either fails the report carries the failed gate with no bound
    verdict.  The bound itself is checked with the declared statistical
    slack (zero for deterministic ensembles with ``c_h = 0``).
    """
    gates = _run_gates(traj, spec, coeffs, "integrated", gate_stride)
    if gates.failed_gate is not None:
        return BoundReport(gates=gates, max_violation=None, passed=None)
    m = traj.second_moments()
    bound = (spec.a2 / spec.a1) * np.exp(-spec.alpha * traj.grid) * m[0]
    slack = _relative_slack(traj, bound, c_h, n_boot, seed=traj.seed + 101)
    ratio = m / (bound * (1.0 + slack))
    max_violation = float(ratio.max() - 1.0)
    return BoundReport(gates=gates, max_violation=max_violation, passed=max_violation <= 0.0)


def derive_ultimate_constants(spec: LyapunovSpec) -> tuple[float, float, float]:
    """Constants (S, beta, M) implied by an offset-family spec:
    S = a2/a1, beta = alpha, M = (alpha*(M2 + M3) + M1) / (alpha * a1)."""
    s = spec.a2 / spec.a1
    m = (spec.alpha * (spec.M2 + spec.M3) + spec.M1) / (spec.alpha * spec.a1)
    return s, spec.alpha, m


def ultimate_boundedness_check(
    traj: TrajectoryRecord,
    S: Optional[float] = None,
    beta: Optional[float] = None,
    M: Optional[float] = None,
    spec: Optional[LyapunovSpec] = None,
    coeffs: Optional[Coefficients] = None,
    c_h: float = 0.0,
    n_boot: int = 200,
    gate_stride: int = 256,
) -> BoundReport:
    """Bound m(t) <= S e^{-beta t} m(0) + M with statistical slack.

    Constants may be given directly or derived from an offset-family
    spec.  When both a spec and coefficients are supplied the hypothesis
    gates run first, exactly as for the decay bound.
    """
    if S is None or beta is None or M is None:
        if spec is None:
            raise ValueError("provide (S, beta, M) or an offset-family spec")
        S, beta, M = derive_ultimate_constants(spec)
    if spec is not None and coeffs is not None:
        gates = _run_gates(traj, spec, coeffs, "integrated", gate_stride)
        if gates.failed_gate is not None:
            return BoundReport(gates=gates, max_violation=None, passed=None)
    else:
        gates = GateReport(True, True, None)
    m = traj.second_moments()
    bound = S * np.exp(-beta * traj.grid) * m[0] + M
    slack = _relative_slack(traj, bound, c_h, n_boot, seed=traj.seed + 202)
    ratio = m / (bound * (1.0 + slack))
    max_violation = float(ratio.max() - 1.0)
    return BoundReport(gates=gates, max_violation=max_violation, passed=max_violation <= 0.0)


def as_stability_estimate(
    trajectories: Sequence[TrajectoryRecord],
    eps_levels: Sequence[float],
    horizon_tail: float = 0.9,
) -> dict:
    """Fraction of paths whose tail sup-norm stays below each level.

    Every (seed, particle) pair counts as one path; the tail window is
    ``t >= horizon_tail * T``.  Fractions are nonincreasing in eps by
    construction; they only estimate the almost-sure statement.
    """
    tail_sups = []
    for traj in trajectories:
        mask = traj.grid >= horizon_tail * traj.grid[-1]
        norms = np.linalg.norm(traj.X[mask], axis=-1)  # (T_tail, N)
        tail_sups.append(norms.max(axis=0))
    sups = np.concatenate(tail_sups)
    return {
        float(eps): float(np.mean(sups < eps)) for eps in sorted(eps_levels, reverse=True)
    }
