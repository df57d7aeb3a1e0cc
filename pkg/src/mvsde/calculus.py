"""Test functions of (point, measure) pairs and the mean-field calculus.

A :class:`TestFunction` carries the value Phi(x, mu) together with the
analytic derivatives the generator and the Ito-residual harness consume:
the x-gradient and Hessian, the measure derivative dmu(x, mu)(y) and its
y-derivative.  The measure derivative is understood in the lift sense:
displacing one atom of an N-point empirical measure changes the value at
rate (1/N) * dmu evaluated at that atom, which is exactly what
:func:`lift_gradient_check` verifies by finite differences.

Callable contracts (all batched):

* ``phi(x, mu)``        -> shape ``x.shape[:-1]``
* ``dx_phi(x, mu)``     -> shape ``x.shape``
* ``dxx_phi(x, mu)``    -> shape ``x.shape + (d,)``
* ``dmu_phi(x, mu, y)`` and ``dy_dmu_phi(x, mu, y)``: x and y arrive with
  broadcast-compatible shapes (e.g. ``(P, 1, d)`` against ``(1, M, d)``)
  and the result must broadcast to their common shape (plus ``(d,)`` for
  the y-derivative).

When the measure derivative factorizes as ``dmu(x, mu)(y) = g(x, mu) *
v(y, mu)`` (true for the whole shipped library), ``dmu_factor`` holds the
callables ``(g, v, vy)`` and the double empirical averages reduce to
products of single averages; the generic pairwise path is kept for user
functions and cross-checked in tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import IndexOutOfRange
from .measures import EmpiricalMeasure, second_moment_norm
from .operators import pairing_tolerance
from .solver import Coefficients, TrajectoryRecord, _eval_diffusion, _eval_drift


@dataclass(frozen=True)
class TestFunction:
    label: str
    phi: Callable
    dx_phi: Callable
    dxx_phi: Callable
    dmu_phi: Callable
    dy_dmu_phi: Callable
    dmu_factor: Optional[tuple] = None
    bounds: dict = None

    def value(self, x, mu) -> float:
        return float(np.asarray(self.phi(np.asarray(x, dtype=float), mu)))


def _pair_views(x: np.ndarray, y: np.ndarray):
    return x[:, None, :], y[None, :, :]


def _pair_dmu(fn, x, mu, y, extra_dim=0):
    xs, ys = _pair_views(x, y)
    out = np.asarray(fn(xs, mu, ys), dtype=float)
    target = (x.shape[0], y.shape[0], y.shape[-1]) + (y.shape[-1],) * extra_dim
    return np.broadcast_to(out, target)


def _dx_block(phi: TestFunction, x: np.ndarray, mu) -> np.ndarray:
    return np.broadcast_to(np.asarray(phi.dx_phi(x, mu), dtype=float), x.shape)


def _dxx_block(phi: TestFunction, x: np.ndarray, mu) -> np.ndarray:
    d = x.shape[-1]
    return np.broadcast_to(
        np.asarray(phi.dxx_phi(x, mu), dtype=float), x.shape + (d,)
    )


# ---------------------------------------------------------------------------
# the shipped function library
# ---------------------------------------------------------------------------


def _zeros_pair(x, mu, y):
    return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))


def _zeros_pair_mat(x, mu, y):
    shape = np.broadcast_shapes(np.shape(x), np.shape(y))
    return np.zeros(shape + (shape[-1],))


def _eye_like(y, scale=1.0):
    d = np.shape(y)[-1]
    return scale * np.eye(d)


def constant(value: float = 1.0) -> TestFunction:
    return TestFunction(
        label=f"constant({value})",
        phi=lambda x, mu: np.full(np.shape(x)[:-1], float(value)),
        dx_phi=lambda x, mu: np.zeros(np.shape(x)),
        dxx_phi=lambda x, mu: np.zeros(np.shape(x) + (np.shape(x)[-1],)),
        dmu_phi=_zeros_pair,
        dy_dmu_phi=_zeros_pair_mat,
        dmu_factor=(
            lambda x, mu: np.zeros(np.shape(x)[:-1]),
            lambda y, mu: np.zeros(np.shape(y)),
            lambda y, mu: np.zeros(np.shape(y) + (np.shape(y)[-1],)),
        ),
        bounds={"bounded": True, "lipschitz_derivatives": True},
    )


def quadratic_x() -> TestFunction:
    """Phi(x, mu) = |x|^2."""
    return TestFunction(
        label="quadratic_x",
        phi=lambda x, mu: np.sum(x**2, axis=-1),
        dx_phi=lambda x, mu: 2.0 * x,
        dxx_phi=lambda x, mu: np.broadcast_to(
            2.0 * np.eye(np.shape(x)[-1]), np.shape(x) + (np.shape(x)[-1],)
        ),
        dmu_phi=_zeros_pair,
        dy_dmu_phi=_zeros_pair_mat,
        dmu_factor=(
            lambda x, mu: np.zeros(np.shape(x)[:-1]),
            lambda y, mu: np.zeros(np.shape(y)),
            lambda y, mu: np.zeros(np.shape(y) + (np.shape(y)[-1],)),
        ),
        bounds={"bounded": False},
    )


def second_moment() -> TestFunction:
    """Phi(x, mu) = int |y|^2 mu(dy); measure derivative 2y."""
    return TestFunction(
        label="second_moment",
        phi=lambda x, mu: np.broadcast_to(second_moment_norm(mu), np.shape(x)[:-1]),
        dx_phi=lambda x, mu: np.zeros(np.shape(x)),
        dxx_phi=lambda x, mu: np.zeros(np.shape(x) + (np.shape(x)[-1],)),
        dmu_phi=lambda x, mu, y: np.broadcast_to(
            2.0 * y, np.broadcast_shapes(np.shape(x), np.shape(y))
        ),
        dy_dmu_phi=lambda x, mu, y: np.broadcast_to(
            2.0 * np.eye(np.shape(y)[-1]),
            np.broadcast_shapes(np.shape(x), np.shape(y)) + (np.shape(y)[-1],),
        ),
        dmu_factor=(
            lambda x, mu: np.ones(np.shape(x)[:-1]),
            lambda y, mu: 2.0 * y,
            lambda y, mu: np.broadcast_to(
                2.0 * np.eye(np.shape(y)[-1]), np.shape(y) + (np.shape(y)[-1],)
            ),
        ),
        bounds={"bounded": False},
    )


def mixed_quadratic(weight: float = 1.0) -> TestFunction:
    """Phi(x, mu) = |x|^2 + weight * int |y|^2 mu(dy)."""
    w = float(weight)
    return TestFunction(
        label=f"mixed_quadratic({w})",
        phi=lambda x, mu: np.sum(x**2, axis=-1) + w * second_moment_norm(mu),
        dx_phi=lambda x, mu: 2.0 * x,
        dxx_phi=lambda x, mu: np.broadcast_to(
            2.0 * np.eye(np.shape(x)[-1]), np.shape(x) + (np.shape(x)[-1],)
        ),
        dmu_phi=lambda x, mu, y: np.broadcast_to(
            2.0 * w * y, np.broadcast_shapes(np.shape(x), np.shape(y))
        ),
        dy_dmu_phi=lambda x, mu, y: np.broadcast_to(
            2.0 * w * np.eye(np.shape(y)[-1]),
            np.broadcast_shapes(np.shape(x), np.shape(y)) + (np.shape(y)[-1],),
        ),
        dmu_factor=(
            lambda x, mu: np.full(np.shape(x)[:-1], w),
            lambda y, mu: 2.0 * y,
            lambda y, mu: np.broadcast_to(
                2.0 * np.eye(np.shape(y)[-1]), np.shape(y) + (np.shape(y)[-1],)
            ),
        ),
        bounds={"bounded": False},
    )


def linear_x(c) -> TestFunction:
    """Phi(x, mu) = <c, x>."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    return TestFunction(
        label="linear_x",
        phi=lambda x, mu: np.sum(c * x, axis=-1),
        dx_phi=lambda x, mu: np.broadcast_to(c, np.shape(x)),
        dxx_phi=lambda x, mu: np.zeros(np.shape(x) + (np.shape(x)[-1],)),
        dmu_phi=_zeros_pair,
        dy_dmu_phi=_zeros_pair_mat,
        dmu_factor=(
            lambda x, mu: np.zeros(np.shape(x)[:-1]),
            lambda y, mu: np.zeros(np.shape(y)),
            lambda y, mu: np.zeros(np.shape(y) + (np.shape(y)[-1],)),
        ),
        bounds={"bounded": False},
    )


def mean_functional(c) -> TestFunction:
    """Phi(x, mu) = <c, mean(mu)>; measure derivative is the constant c."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    return TestFunction(
        label="mean_functional",
        phi=lambda x, mu: np.broadcast_to(float(np.dot(c, mu.mean())), np.shape(x)[:-1]),
        dx_phi=lambda x, mu: np.zeros(np.shape(x)),
        dxx_phi=lambda x, mu: np.zeros(np.shape(x) + (np.shape(x)[-1],)),
        dmu_phi=lambda x, mu, y: np.broadcast_to(
            c, np.broadcast_shapes(np.shape(x), np.shape(y))
        ),
        dy_dmu_phi=_zeros_pair_mat,
        dmu_factor=(
            lambda x, mu: np.ones(np.shape(x)[:-1]),
            lambda y, mu: np.broadcast_to(c, np.shape(y)),
            lambda y, mu: np.zeros(np.shape(y) + (np.shape(y)[-1],)),
        ),
        bounds={"bounded": False},
    )


def mean_product(c1, c2) -> TestFunction:
    """Phi(x, mu) = <c1, x> * <c2, mean(mu)>: a genuinely mixed function
    whose measure derivative depends on the x slot."""
    c1 = np.atleast_1d(np.asarray(c1, dtype=float))
    c2 = np.atleast_1d(np.asarray(c2, dtype=float))

    def dmu(x, mu, y):
        lin = np.sum(c1 * x, axis=-1)[..., None] * c2
        return np.broadcast_to(lin, np.broadcast_shapes(np.shape(x), np.shape(y)))

    return TestFunction(
        label="mean_product",
        phi=lambda x, mu: np.sum(c1 * x, axis=-1) * float(np.dot(c2, mu.mean())),
        dx_phi=lambda x, mu: np.broadcast_to(
            c1 * float(np.dot(c2, mu.mean())), np.shape(x)
        ),
        dxx_phi=lambda x, mu: np.zeros(np.shape(x) + (np.shape(x)[-1],)),
        dmu_phi=dmu,
        dy_dmu_phi=_zeros_pair_mat,
        dmu_factor=(
            lambda x, mu: np.sum(c1 * x, axis=-1),
            lambda y, mu: np.broadcast_to(c2, np.shape(y)),
            lambda y, mu: np.zeros(np.shape(y) + (np.shape(y)[-1],)),
        ),
        bounds={"bounded": False},
    )


def bounded_composite() -> TestFunction:
    """Phi(x, mu) = tanh(|x|^2) / (1 + int |y|^2 mu(dy)).

    Bounded with bounded derivatives; covers the regime where the chain
    rule mixes x- and measure-slots nonlinearly.
    """

    def _s(mu):
        return 1.0 + second_moment_norm(mu)

    def phi(x, mu):
        return np.tanh(np.sum(x**2, axis=-1)) / _s(mu)

    def dx(x, mu):
        q = np.sum(x**2, axis=-1)
        sech2 = 1.0 - np.tanh(q) ** 2
        return (2.0 * sech2[..., None] * x) / _s(mu)

    def dxx(x, mu):
        d = np.shape(x)[-1]
        q = np.sum(x**2, axis=-1)
        th = np.tanh(q)
        sech2 = 1.0 - th**2
        eye = np.eye(d)
        outer = x[..., :, None] * x[..., None, :]
        return (
            2.0 * sech2[..., None, None] * eye
            - 8.0 * (th * sech2)[..., None, None] * outer
        ) / _s(mu)

    def g(x, mu):
        return -np.tanh(np.sum(x**2, axis=-1)) / _s(mu) ** 2

    def dmu(x, mu, y):
        val = g(x, mu)[..., None] * (2.0 * y)
        return np.broadcast_to(val, np.broadcast_shapes(np.shape(x), np.shape(y)))

    def dydmu(x, mu, y):
        d = np.shape(y)[-1]
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        val = g(x, mu)[..., None, None] * (2.0 * np.eye(d))
        return np.broadcast_to(val, shape + (d,))

    return TestFunction(
        label="bounded_composite",
        phi=phi,
        dx_phi=dx,
        dxx_phi=dxx,
        dmu_phi=dmu,
        dy_dmu_phi=dydmu,
        dmu_factor=(
            g,
            lambda y, mu: 2.0 * y,
            lambda y, mu: np.broadcast_to(
                2.0 * np.eye(np.shape(y)[-1]), np.shape(y) + (np.shape(y)[-1],)
            ),
        ),
        bounds={"bounded": True, "lipschitz_derivatives": True},
    )


def combine(a: float, f: TestFunction, b: float, g: TestFunction) -> TestFunction:
    """Linear combination a*f + b*g (generic pairwise derivative path)."""
    return TestFunction(
        label=f"{a}*{f.label}+{b}*{g.label}",
        phi=lambda x, mu: a * f.phi(x, mu) + b * g.phi(x, mu),
        dx_phi=lambda x, mu: a * _dx_block(f, x, mu) + b * _dx_block(g, x, mu),
        dxx_phi=lambda x, mu: a * _dxx_block(f, x, mu) + b * _dxx_block(g, x, mu),
        dmu_phi=lambda x, mu, y: a * np.asarray(f.dmu_phi(x, mu, y))
        + b * np.asarray(g.dmu_phi(x, mu, y)),
        dy_dmu_phi=lambda x, mu, y: a * np.asarray(f.dy_dmu_phi(x, mu, y))
        + b * np.asarray(g.dy_dmu_phi(x, mu, y)),
        dmu_factor=None,
        bounds={},
    )


FUNCTION_LIBRARY = {
    "quadratic_x": quadratic_x,
    "second_moment": second_moment,
    "mixed_quadratic": mixed_quadratic,
    "linear_x": lambda: linear_x([1.0]),
    "mean_functional": lambda: mean_functional([1.0]),
    "mean_product": lambda: mean_product([1.0], [1.0]),
    "bounded_composite": bounded_composite,
}


# ---------------------------------------------------------------------------
# generator and diagnostics
# ---------------------------------------------------------------------------


def _mu_terms_block(phi: TestFunction, x_block: np.ndarray, mu, b_atoms, ss_atoms):
    """Measure-derivative part of the generator for a block of base points.

    Returns the two integral terms (drift and diffusion against the
    measure derivative) as arrays over the block.
    """
    atoms = mu.points
    if phi.dmu_factor is not None:
        g_fn, v_fn, vy_fn = phi.dmu_factor
        g = np.asarray(g_fn(x_block, mu), dtype=float)
        v = np.broadcast_to(np.asarray(v_fn(atoms, mu), dtype=float), atoms.shape)
        vy = np.broadcast_to(
            np.asarray(vy_fn(atoms, mu), dtype=float), atoms.shape + (atoms.shape[-1],)
        )
        drift_part = g * float(np.mean(np.sum(b_atoms * v, axis=-1)))
        diff_part = g * (0.5 * float(np.mean(np.einsum("jde,jde->j", ss_atoms, vy))))
        return drift_part, diff_part
    dmu = _pair_dmu(phi.dmu_phi, x_block, mu, atoms)
    dydmu = _pair_dmu(phi.dy_dmu_phi, x_block, mu, atoms, extra_dim=1)
    m = atoms.shape[0]
    drift_part = np.einsum("pmd,md->p", dmu, b_atoms) / m
    diff_part = 0.5 * np.einsum("pmde,mde->p", dydmu, ss_atoms) / m
    return drift_part, diff_part


def generator_at_points(
    phi: TestFunction, x_block: np.ndarray, mu: EmpiricalMeasure, coeffs: Coefficients
) -> np.ndarray:
    """Mean-field generator applied to ``phi`` at a block of points.

    Four terms: drift against the x-gradient, half trace of the diffusion
    against the x-Hessian, and the two measure-derivative integrals
    evaluated as empirical averages over the atoms of ``mu``.
    """
    x_block = np.asarray(x_block, dtype=float)
    b_x = _eval_drift(coeffs, x_block, mu)
    sig_x = _eval_diffusion(coeffs, x_block, mu)
    ss_x = np.einsum("ndm,nem->nde", sig_x, sig_x)
    dx = _dx_block(phi, x_block, mu)
    dxx = _dxx_block(phi, x_block, mu)
    out = np.einsum("nd,nd->n", b_x, dx) + 0.5 * np.einsum("nde,nde->n", ss_x, dxx)

    atoms = mu.points
    b_atoms = _eval_drift(coeffs, atoms, mu)
    sig_atoms = _eval_diffusion(coeffs, atoms, mu)
    ss_atoms = np.einsum("ndm,nem->nde", sig_atoms, sig_atoms)
    drift_part, diff_part = _mu_terms_block(phi, x_block, mu, b_atoms, ss_atoms)
    return out + drift_part + diff_part


def generator(phi: TestFunction, x, mu: EmpiricalMeasure, coeffs: Coefficients) -> float:
    """Generator at a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(generator_at_points(phi, x[None, :], mu, coeffs)[0])


@dataclass(frozen=True)
class LiftReport:
    max_abs_error: float
    errors: np.ndarray


def lift_gradient_check(
    f: TestFunction, mu: EmpiricalMeasure, x_slot=None, fd_step: float = 1e-4
) -> LiftReport:
    """Verify the empirical-lift identity for the measure derivative.

    Viewing f as a function of the N atom positions, the partial gradient
    with respect to atom i equals (1/N) * dmu(mu)(x_i).  Central finite
    differences of the lifted function, scaled by N, are compared against
    the analytic measure derivative at every atom.
    """
    n, d = mu.points.shape
    if n * d > 1000:
        raise ValueError("finite-difference lift check is limited to N*d <= 1000")
    x_slot = (
        np.zeros(d) if x_slot is None else np.atleast_1d(np.asarray(x_slot, dtype=float))
    )
    analytic = np.broadcast_to(
        np.asarray(f.dmu_phi(x_slot, mu, mu.points), dtype=float), mu.points.shape
    )
    errors = np.zeros((n, d))
    for i in range(n):
        for c in range(d):
            plus = mu.points.copy()
            plus[i, c] += fd_step
            minus = mu.points.copy()
            minus[i, c] -= fd_step
            f_plus = f.value(x_slot, EmpiricalMeasure(plus))
            f_minus = f.value(x_slot, EmpiricalMeasure(minus))
            fd = (f_plus - f_minus) / (2.0 * fd_step)
            errors[i, c] = abs(n * fd - analytic[i, c])
    return LiftReport(max_abs_error=float(errors.max()), errors=errors)


@dataclass(frozen=True)
class ItoReport:
    lhs: float
    terms: np.ndarray  # the seven discretized right-hand terms
    residual: float

    @property
    def rhs(self) -> float:
        return float(self.terms.sum())


def ito_residual(
    traj: TrajectoryRecord,
    phi: TestFunction,
    coeffs: Coefficients,
    s_index: int = 0,
    t_index: Optional[int] = None,
) -> ItoReport:
    """Discretized change-of-variables identity along a recorded trajectory.

    The left side is the ensemble-averaged increment of Phi between the
    two grid indices; the right side accumulates, per step, the seven
    mean-field terms (constraint, drift, martingale, second-order,
    measure-drift, measure-diffusion, measure-constraint), all evaluated
    at the left endpoint with the empirical law of the ensemble.  The
    measure-constraint expectation is a double empirical average within
    the single exchangeable ensemble (O(1/N) biased).
    """
    n_steps = traj.n_steps
    if t_index is None:
        t_index = n_steps
    if not (0 <= s_index < t_index <= n_steps):
        raise IndexOutOfRange(
            f"need 0 <= s_index < t_index <= {n_steps}, got {s_index}, {t_index}"
        )
    h = traj.config.h
    terms = np.zeros(7)
    for k in range(s_index, t_index):
        x = traj.X[k]
        mu = EmpiricalMeasure(x)
        dk = traj.dK[k]
        dw = traj.dW[k]
        n = x.shape[0]

        dx = _dx_block(phi, x, mu)
        dxx = _dxx_block(phi, x, mu)
        b = _eval_drift(coeffs, x, mu)
        sig = _eval_diffusion(coeffs, x, mu)
        ss = np.einsum("ndm,nem->nde", sig, sig)

        terms[0] -= np.einsum("nd,nd->", dx, dk) / n
        terms[1] += h * np.einsum("nd,nd->", b, dx) / n
        terms[2] += np.einsum("nd,ndm,nm->", dx, sig, dw) / n
        terms[3] += 0.5 * h * np.einsum("nde,nde->", ss, dxx) / n

        if phi.dmu_factor is not None:
            g_fn, v_fn, vy_fn = phi.dmu_factor
            g_mean = float(np.mean(np.asarray(g_fn(x, mu), dtype=float)))
            v = np.broadcast_to(np.asarray(v_fn(x, mu), dtype=float), x.shape)
            vy = np.broadcast_to(
                np.asarray(vy_fn(x, mu), dtype=float), x.shape + (x.shape[-1],)
            )
            terms[4] += h * g_mean * np.einsum("jd,jd->", b, v) / n
            terms[5] += 0.5 * h * g_mean * np.einsum("jde,jde->", ss, vy) / n
            terms[6] -= g_mean * np.einsum("jd,jd->", v, dk) / n
        else:
            dmu = _pair_dmu(phi.dmu_phi, x, mu, x)
            dydmu = _pair_dmu(phi.dy_dmu_phi, x, mu, x, extra_dim=1)
            terms[4] += h * np.einsum("ijd,jd->", dmu, b) / n**2
            terms[5] += 0.5 * h * np.einsum("ijde,jde->", dydmu, ss) / n**2
            terms[6] -= np.einsum("ijd,jd->", dmu, dk) / n**2

    mu_s = traj.measure_at(s_index)
    mu_t = traj.measure_at(t_index)
    lhs = float(
        np.mean(phi.phi(traj.X[t_index], mu_t)) - np.mean(phi.phi(traj.X[s_index], mu_s))
    )
    return ItoReport(lhs=lhs, terms=terms, residual=lhs - float(terms.sum()))


@dataclass(frozen=True)
class KConditionReport:
    min_increment: float
    passed: bool
    per_step: np.ndarray
    tol: float


def k_condition_monitor(
    traj: TrajectoryRecord, func: TestFunction, tol: Optional[float] = None
) -> KConditionReport:
    """Check that the constraint increments never push the Lyapunov value up.

    Per step, the ensemble average of ``<dxF(X_i), dK_i>`` plus the double
    empirical average of ``<dmuF(X_i)(X_j), dK_j>`` must be nonnegative;
    the report carries the per-step values and their minimum.
    """
    if tol is None:
        tol = pairing_tolerance(traj.X)
    values = np.zeros(traj.n_steps)
    for k in range(traj.n_steps):
        x = traj.X[k + 1]
        mu = EmpiricalMeasure(x)
        dk = traj.dK[k]
        n = x.shape[0]
        dx = _dx_block(func, x, mu)
        total = np.einsum("nd,nd->", dx, dk) / n
        if func.dmu_factor is not None:
            g_fn, v_fn, _ = func.dmu_factor
            g_mean = float(np.mean(np.asarray(g_fn(x, mu), dtype=float)))
            v = np.broadcast_to(np.asarray(v_fn(x, mu), dtype=float), x.shape)
            total += g_mean * np.einsum("jd,jd->", v, dk) / n
        else:
            dmu = _pair_dmu(func.dmu_phi, x, mu, x)
            total += np.einsum("ijd,jd->", dmu, dk) / n**2
        values[k] = total
    min_inc = float(values.min()) if values.size else 0.0
    return KConditionReport(
        min_increment=min_inc, passed=min_inc >= -tol, per_step=values, tol=tol
    )
