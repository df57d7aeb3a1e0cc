"""Named scenario presets: operator + coefficients + scheme + extras.

Coefficients come from closed parameter families only (no expression
language), so every scenario is fully described by a name and a flat
parameter mapping.  Where a closed-form or ODE oracle exists it is
attached by name and used by the verification suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import calculus, operators
from .solver import Coefficients, SchemeConfig
from .stability import LyapunovSpec


# ---------------------------------------------------------------------------
# coefficient presets
# ---------------------------------------------------------------------------


def mean_field_linear(a: float, b_bar: float, s: float, d: int = 1) -> Coefficients:
    """b(x, mu) = -a*x + b_bar*mean(mu), sigma = s*I."""
    if a < 0.0:
        raise ValueError(f"coefficients.a must be >= 0, got {a}")
    eye = np.eye(d)

    def drift(x, mu):
        return -a * x + b_bar * mu.mean()

    def diffusion(x, mu):
        return s * eye

    return Coefficients(
        d=d,
        m=d,
        b=drift,
        sigma=diffusion,
        growth_constant=2.0 * (a**2 + b_bar**2) + d * s**2,
        lipschitz_constant=a + abs(b_bar),
        label=f"mean_field_linear(a={a}, b_bar={b_bar}, s={s})",
    )


def constant_drift(c: float, d: int = 1) -> Coefficients:
    """b = -c (constant downhill drift), sigma = 0."""
    vec = -c * np.ones(d)
    zero = np.zeros((d, d))
    return Coefficients(
        d=d,
        m=d,
        b=lambda x, mu: vec,
        sigma=lambda x, mu: zero,
        growth_constant=c**2,
        lipschitz_constant=0.0,
        label=f"constant_drift(c={c})",
    )


def zero_coefficients(d: int = 1) -> Coefficients:
    zero_v = np.zeros(d)
    zero_m = np.zeros((d, d))
    return Coefficients(
        d=d,
        m=d,
        b=lambda x, mu: zero_v,
        sigma=lambda x, mu: zero_m,
        growth_constant=0.0,
        lipschitz_constant=0.0,
        label="zero_coefficients",
    )


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def reflected_drift_oracle(t, x0: float, c: float):
    """Closed form for reflection at 0 under drift -c:
    X = max(x0 - c t, 0), K = -(c t - x0)^+."""
    t = np.asarray(t, dtype=float)
    x = np.maximum(x0 - c * t, 0.0)
    k = -np.maximum(c * t - x0, 0.0)
    return x, k


def soft_threshold_oracle(t, x0: float, w: float):
    """Closed form for the subgradient flow of w*|x|: slide to 0 at speed w,
    then stay (0 belongs to the subdifferential there)."""
    t = np.asarray(t, dtype=float)
    x = np.sign(x0) * np.maximum(np.abs(x0) - w * t, 0.0)
    k = x0 - x
    return x, k


def exp_decay_oracle(t, x0: float, rate: float):
    t = np.asarray(t, dtype=float)
    return x0 * np.exp(-rate * t)


def mean_field_moment_oracle(t_grid, x0: float, a: float, b_bar: float, s: float):
    """First and second moments of the mean-field linear equation:
    dm/dt = (b_bar - a) m,  dv/dt = -2 a v + 2 b_bar m^2 + s^2."""
    t_grid = np.asarray(t_grid, dtype=float)

    def rhs(_, y):
        m, v = y
        return [(b_bar - a) * m, -2.0 * a * v + 2.0 * b_bar * m**2 + s**2]

    sol = solve_ivp(
        rhs,
        (t_grid[0], t_grid[-1]),
        [x0, x0**2],
        t_eval=t_grid,
        rtol=1e-10,
        atol=1e-12,
        method="RK45",
    )
    return sol.y[0], sol.y[1]


ORACLES = {
    "reflected_drift": reflected_drift_oracle,
    "soft_threshold": soft_threshold_oracle,
    "exp_decay": exp_decay_oracle,
    "mean_field_moments": mean_field_moment_oracle,
}


# ---------------------------------------------------------------------------
# scenario registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    operator: operators.MonotoneOperator
    coefficients: Coefficients
    config: SchemeConfig
    parameters: dict
    lyapunov: Optional[LyapunovSpec] = None
    oracle: Optional[str] = None
    c_h: float = 0.0  # declared O(h) slack coefficient for moment bounds


def _require_positive(params: dict, keys):
    for key in keys:
        if not params[key] > 0.0:
            raise ValueError(f"parameters.{key} must be > 0, got {params[key]}")


def _scheme(defaults: dict, scheme: dict, initial) -> SchemeConfig:
    merged = dict(defaults)
    merged.update({k: v for k, v in scheme.items() if v is not None})
    return SchemeConfig(
        h=float(merged["h"]),
        N=int(merged["N"]),
        T=float(merged["T"]),
        seed=int(merged["seed"]),
        initial=initial,
        blowup_threshold=float(merged.get("blowup_threshold", 1e8)),
    )


def _reflected_drift(params, scheme):
    p = {"c": 1.0, "x0": 1.0}
    p.update(params)
    _require_positive(p, ["c"])
    return Scenario(
        name="reflected-drift",
        operator=operators.normal_cone_box([0.0], [np.inf]),
        coefficients=constant_drift(p["c"]),
        config=_scheme({"h": 0.1, "N": 1, "T": 2.0, "seed": 0}, scheme, p["x0"]),
        parameters=p,
        oracle="reflected_drift",
        c_h=0.0,
    )


def _mean_field_ou(params, scheme):
    p = {"a": 1.0, "b_bar": 0.5, "s": 0.3, "x0": 1.0}
    p.update(params)
    _require_positive(p, ["a"])
    return Scenario(
        name="mean-field-ou",
        operator=operators.zero_operator(1),
        coefficients=mean_field_linear(p["a"], p["b_bar"], p["s"]),
        config=_scheme({"h": 0.005, "N": 4000, "T": 4.0, "seed": 0}, scheme, p["x0"]),
        parameters=p,
        oracle="mean_field_moments",
        c_h=5.0,
    )


def _contraction(params, scheme):
    p = {"rate": 1.0, "x0": 1.0}
    p.update(params)
    _require_positive(p, ["rate"])
    spec = LyapunovSpec(
        F=calculus.quadratic_x(), alpha=2.0 * p["rate"], a1=1.0, a2=1.0, family="strict"
    )
    return Scenario(
        name="contraction",
        operator=operators.zero_operator(1),
        coefficients=mean_field_linear(p["rate"], 0.0, 0.0),
        config=_scheme({"h": 1e-3, "N": 8, "T": 1.0, "seed": 0}, scheme, p["x0"]),
        parameters=p,
        lyapunov=spec,
        oracle="exp_decay",
        c_h=0.0,
    )


# Window pinned by the contraction sweep in demos/picard_contraction.py:
# one solve-map application shrinks flow distances by roughly b_bar*T, so
# T = 0.25 sits comfortably inside the contractive regime for the default
# parameters while T >= 4 leaves it.
PICARD_WINDOW_T = 0.25


def _picard_window(params, scheme):
    p = {"a": 1.0, "b_bar": 0.5, "s": 0.3, "x0": 1.0}
    p.update(params)
    _require_positive(p, ["a"])
    return Scenario(
        name="picard-window",
        operator=operators.zero_operator(1),
        coefficients=mean_field_linear(p["a"], p["b_bar"], p["s"]),
        config=_scheme(
            {"h": 0.005, "N": 500, "T": PICARD_WINDOW_T, "seed": 0}, scheme, p["x0"]
        ),
        parameters=p,
        c_h=0.0,
    )


def _noisy_ou(params, scheme):
    p = {"a": 1.0, "s": 0.5, "x0": 1.0}
    p.update(params)
    _require_positive(p, ["a", "s"])
    spec = LyapunovSpec(
        F=calculus.quadratic_x(),
        alpha=p["a"],
        a1=1.0,
        a2=1.0,
        M1=p["s"] ** 2,
        family="offset",
    )
    return Scenario(
        name="noisy-ou",
        operator=operators.zero_operator(1),
        coefficients=mean_field_linear(p["a"], 0.0, p["s"]),
        config=_scheme({"h": 0.01, "N": 2000, "T": 6.0, "seed": 0}, scheme, p["x0"]),
        parameters=p,
        lyapunov=spec,
        c_h=1.0,
    )


def _soft_threshold(params, scheme):
    p = {"w": 1.0, "x0": 2.0}
    p.update(params)
    _require_positive(p, ["w"])
    return Scenario(
        name="soft-threshold-flow",
        operator=operators.subdifferential_abs([p["w"]]),
        coefficients=zero_coefficients(1),
        config=_scheme({"h": 0.01, "N": 1, "T": 4.0, "seed": 0}, scheme, p["x0"]),
        parameters=p,
        oracle="soft_threshold",
        c_h=0.0,
    )


def _null_drift(params, scheme):
    p = {"x0": 1.0}
    p.update(params)
    return Scenario(
        name="null-drift",
        operator=operators.zero_operator(1),
        coefficients=zero_coefficients(1),
        config=_scheme({"h": 0.01, "N": 1, "T": 1.0, "seed": 0}, scheme, p["x0"]),
        parameters=p,
        c_h=0.0,
    )


def _reflected_ou_ball(params, scheme):
    p = {"theta": 1.0, "radius": 1.0, "s": 0.4, "x0": None}
    p.update(params)
    _require_positive(p, ["theta", "radius"])
    if p["s"] < 0.0:
        raise ValueError(f"parameters.s must be >= 0, got {p['s']}")
    x0 = p["x0"] if p["x0"] is not None else [p["radius"], 0.0]
    spec = LyapunovSpec(
        F=calculus.quadratic_x(),
        alpha=p["theta"],
        a1=1.0,
        a2=1.0,
        M1=2.0 * p["s"] ** 2,
        family="offset",
    )
    return Scenario(
        name="reflected-ou-ball",
        operator=operators.normal_cone_ball([0.0, 0.0], p["radius"]),
        coefficients=mean_field_linear(p["theta"], 0.0, p["s"], d=2),
        config=_scheme({"h": 0.01, "N": 500, "T": 3.0, "seed": 0}, scheme, x0),
        parameters=p,
        lyapunov=spec,
        c_h=1.0,
    )


def _custom(params, scheme):
    """Assemble a scenario from an explicit operator spec and coefficient
    preset; parameter presets only, no expression language."""
    p = dict(params)
    op_spec = p.pop("operator", {"kind": "zero", "d": 1})
    coeff_name = p.pop("coefficients", "mean_field_linear")
    x0 = p.pop("x0", 0.0)
    op = operators.from_config(op_spec)
    if coeff_name == "mean_field_linear":
        coeffs = mean_field_linear(
            p.get("a", 1.0), p.get("b_bar", 0.0), p.get("s", 0.0), d=op.dimension
        )
    elif coeff_name == "constant_drift":
        coeffs = constant_drift(p.get("c", 1.0), d=op.dimension)
    elif coeff_name == "zero":
        coeffs = zero_coefficients(d=op.dimension)
    else:
        raise ValueError(f"unknown coefficient preset {coeff_name!r}")
    return Scenario(
        name="custom",
        operator=op,
        coefficients=coeffs,
        config=_scheme({"h": 0.01, "N": 1000, "T": 1.0, "seed": 0}, scheme, x0),
        parameters=params,
        c_h=1.0,
    )


SCENARIOS = {
    "reflected-drift": _reflected_drift,
    "mean-field-ou": _mean_field_ou,
    "contraction": _contraction,
    "picard-window": _picard_window,
    "noisy-ou": _noisy_ou,
    "soft-threshold-flow": _soft_threshold,
    "null-drift": _null_drift,
    "reflected-ou-ball": _reflected_ou_ball,
    "custom": _custom,
}


def build_scenario(name: str, parameters: dict = None, scheme: dict = None) -> Scenario:
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; valid: {sorted(SCENARIOS)}")
    return SCENARIOS[name](parameters or {}, scheme or {})


def scenario_names():
    return sorted(SCENARIOS)
