"""Batch front end.

Subcommands: ``simulate``, ``picard``, ``ito-check``, ``stability``,
``operators-test``, ``scenarios``.  Every run is driven by a JSON config
file (see ``DEFAULTS`` for the documented defaults) plus repeatable
``--set key.path=value`` overrides.  Exit codes: 0 success, 1 a check
reported pass=false, 2 usage or config error, 3 numeric abort (blow-up or
non-convergence).

Outputs are CSV/JSON files in the ``--out`` directory; floats use the
shortest round-trip representation, so identical configs give
byte-identical files at any thread count.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import calculus, scenarios, serialize, solver, stability
from .errors import (
    CoefficientBlowup,
    ConfigError,
    MvsdeError,
    NotConverged,
    StateBlowup,
)
from .operators import gallery_axiom_reports

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

DEFAULTS = {
    "scheme": {"h": 0.01, "N": 1000, "T": 1.0, "blowup_threshold": 1e8},
    "picard": {"tol": 1e-4, "max_iter": 12},
    "ito": {"function": "mixed_quadratic", "s_index": 0, "t_index": None, "n_seeds": 1},
    "stability": {
        "n_seeds": 1,
        "eps_levels": [1e-3, 1e-2, 1e-1],
        "horizon_tail": 0.9,
        "burn_in": 0.2,
        "n_boot": 200,
        "alpha": None,
    },
    "threads": 1,
}

_TOP_KEYS = {"scenario", "scheme", "parameters", "picard", "ito", "stability", "threads"}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _check_number(cfg, section, key, errors, *, minimum=None, strict=False, integer=False):
    value = cfg[section][key]
    path = f"{section}.{key}"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append((path, f"expected a number, got {value!r}"))
        return
    if integer and int(value) != value:
        errors.append((path, f"expected an integer, got {value!r}"))
        return
    if minimum is not None:
        if strict and not value > minimum:
            errors.append((path, f"must be > {minimum}, got {value}"))
        elif not strict and not value >= minimum:
            errors.append((path, f"must be >= {minimum}, got {value}"))


def normalize_config(raw: dict) -> dict:
    """Fill defaults and validate; raises ConfigError with one entry per
    violation, each naming the offending key path."""
    errors = []
    if not isinstance(raw, dict):
        raise ConfigError([("(root)", "config must be a JSON object")])
    for key in raw:
        if key not in _TOP_KEYS:
            errors.append((key, "unknown configuration key"))

    cfg = {
        "scenario": raw.get("scenario"),
        "scheme": {**DEFAULTS["scheme"], **(raw.get("scheme") or {})},
        "parameters": copy.deepcopy(raw.get("parameters") or {}),
        "picard": {**DEFAULTS["picard"], **(raw.get("picard") or {})},
        "ito": {**DEFAULTS["ito"], **(raw.get("ito") or {})},
        "stability": {**DEFAULTS["stability"], **(raw.get("stability") or {})},
        "threads": raw.get("threads", DEFAULTS["threads"]),
    }

    if not isinstance(cfg["scenario"], str) or cfg["scenario"] not in scenarios.SCENARIOS:
        errors.append(
            ("scenario", f"must be one of {scenarios.scenario_names()}, got {cfg['scenario']!r}")
        )

    _check_number(cfg, "scheme", "h", errors, minimum=0.0, strict=True)
    _check_number(cfg, "scheme", "N", errors, minimum=1, integer=True)
    _check_number(cfg, "scheme", "T", errors, minimum=0.0, strict=True)
    _check_number(cfg, "scheme", "blowup_threshold", errors, minimum=0.0, strict=True)
    if "seed" not in cfg["scheme"]:
        errors.append(("scheme.seed", "required (64-bit unsigned integer)"))
    else:
        seed = cfg["scheme"]["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            errors.append(("scheme.seed", f"must be an integer in [0, 2^64), got {seed!r}"))

    scheme_ok = not any(path.startswith("scheme.") for path, _ in errors)
    if scheme_ok:
        h, t = float(cfg["scheme"]["h"]), float(cfg["scheme"]["T"])
        if t < h:
            errors.append(("scheme.T", f"horizon {t} must be at least one step {h}"))
        else:
            ratio = t / h
            import math

            if abs(ratio - round(ratio)) > 4 * math.ulp(ratio):
                errors.append(
                    (
                        "scheme.T",
                        f"grid exactness: T={t} must be an integer multiple of h={h}",
                    )
                )

    _check_number(cfg, "picard", "tol", errors, minimum=0.0, strict=True)
    _check_number(cfg, "picard", "max_iter", errors, minimum=1, integer=True)

    if cfg["ito"]["function"] not in calculus.FUNCTION_LIBRARY:
        errors.append(
            ("ito.function", f"must be one of {sorted(calculus.FUNCTION_LIBRARY)}")
        )
    _check_number(cfg, "ito", "s_index", errors, minimum=0, integer=True)
    _check_number(cfg, "ito", "n_seeds", errors, minimum=1, integer=True)
    if cfg["ito"]["t_index"] is not None:
        _check_number(cfg, "ito", "t_index", errors, minimum=1, integer=True)

    _check_number(cfg, "stability", "n_seeds", errors, minimum=1, integer=True)
    _check_number(cfg, "stability", "horizon_tail", errors, minimum=0.0)
    _check_number(cfg, "stability", "burn_in", errors, minimum=0.0)
    _check_number(cfg, "stability", "n_boot", errors, minimum=2, integer=True)
    if cfg["stability"]["alpha"] is not None:
        _check_number(cfg, "stability", "alpha", errors, minimum=0.0, strict=True)
    eps = cfg["stability"]["eps_levels"]
    if not isinstance(eps, list) or not eps or not all(
        isinstance(e, (int, float)) and not isinstance(e, bool) and e > 0 for e in eps
    ):
        errors.append(("stability.eps_levels", "must be a nonempty list of positive numbers"))

    if isinstance(cfg["threads"], bool) or not isinstance(cfg["threads"], int) or cfg["threads"] < 1:
        errors.append(("threads", f"must be a positive integer, got {cfg['threads']!r}"))

    if not errors and isinstance(cfg["parameters"], dict):
        try:
            scenarios.build_scenario(cfg["scenario"], cfg["parameters"], _scheme_dict(cfg))
        except (ValueError, MvsdeError) as exc:
            errors.append(("parameters", str(exc)))
    elif not isinstance(cfg["parameters"], dict):
        errors.append(("parameters", "must be a JSON object"))

    if errors:
        raise ConfigError(errors)

    cfg["scheme"]["h"] = float(cfg["scheme"]["h"])
    cfg["scheme"]["N"] = int(cfg["scheme"]["N"])
    cfg["scheme"]["T"] = float(cfg["scheme"]["T"])
    cfg["scheme"]["seed"] = int(cfg["scheme"]["seed"])
    cfg["scheme"]["blowup_threshold"] = float(cfg["scheme"]["blowup_threshold"])
    cfg["stability"]["eps_levels"] = [float(e) for e in eps]
    return cfg


def canonical_config_text(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def validate_config(config_path) -> dict:
    """Load, default-fill and validate a config file.

    Normalization is idempotent: validating the canonical dump of a
    normalized config reproduces it byte for byte.
    """
    path = Path(config_path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError([("(file)", f"config file not found: {path}")])
    except json.JSONDecodeError as exc:
        raise ConfigError([("(file)", f"invalid JSON: {exc}")])
    return normalize_config(raw)


def _scheme_dict(cfg: dict) -> dict:
    return dict(cfg["scheme"])


def apply_override(raw: dict, assignment: str) -> None:
    """Apply one ``key.path=value`` override; values parse as JSON with a
    bare-string fallback."""
    if "=" not in assignment:
        raise ConfigError([(assignment, "override must look like key.path=value")])
    key_path, text = assignment.split("=", 1)
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    node = raw
    parts = key_path.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError([(key_path, "override path crosses a non-object value")])
    node[parts[-1]] = value


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _build(cfg: dict) -> scenarios.Scenario:
    return scenarios.build_scenario(cfg["scenario"], cfg["parameters"], _scheme_dict(cfg))


def _multi_seed_trajectories(scenario, n_seeds: int, threads: int):
    """One trajectory per derived seed (base + offset), in seed order."""
    configs = [
        replace(scenario.config, seed=scenario.config.seed + i) for i in range(n_seeds)
    ]

    def run(cfg):
        return solver.simulate(scenario.operator, scenario.coefficients, cfg)

    if threads <= 1 or n_seeds == 1:
        return [run(c) for c in configs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, configs))


def cmd_simulate(cfg: dict, out: Path) -> int:
    scenario = _build(cfg)
    traj = solver.simulate(scenario.operator, scenario.coefficients, scenario.config)
    serialize.trajectory_to_csv(traj, out / "trajectory.csv")
    serialize.write_json(serialize.trajectory_summary(traj), out / "summary.json")
    print(f"simulate: wrote {out / 'trajectory.csv'} ({traj.n_steps} steps, N={traj.config.N})")
    return EXIT_OK


def cmd_picard(cfg: dict, out: Path) -> int:
    scenario = _build(cfg)

    def writer(iteration: int, flow):
        serialize.flow_to_csv(flow, out / f"flow_iter_{iteration:02d}.csv")

    flow, diag = solver.picard(
        scenario.operator,
        scenario.coefficients,
        scenario.config,
        tol=float(cfg["picard"]["tol"]),
        max_iter=int(cfg["picard"]["max_iter"]),
        iterate_hook=writer,
    )
    serialize.write_json(
        {
            "iterations": diag.iterations,
            "deltas": list(diag.deltas),
            "converged": diag.converged,
            "tol": diag.tol,
        },
        out / "convergence.json",
    )
    print(
        f"picard: {'converged' if diag.converged else 'NOT converged'} "
        f"after {diag.iterations} iterations (last delta "
        f"{diag.deltas[-1] if diag.deltas else float('nan'):.3g})"
    )
    return EXIT_OK if diag.converged else EXIT_NUMERIC


def cmd_ito_check(cfg: dict, out: Path) -> int:
    scenario = _build(cfg)
    ito_cfg = cfg["ito"]
    func = calculus.FUNCTION_LIBRARY[ito_cfg["function"]]()
    rows = []
    for offset in range(int(ito_cfg["n_seeds"])):
        config = replace(scenario.config, seed=scenario.config.seed + offset)
        traj = solver.simulate(scenario.operator, scenario.coefficients, config)
        t_index = ito_cfg["t_index"]
        report = calculus.ito_residual(
            traj,
            func,
            scenario.coefficients,
            s_index=int(ito_cfg["s_index"]),
            t_index=None if t_index is None else int(t_index),
        )
        rows.append((config.seed, report))
    import csv as _csv

    with open(out / "ito_terms.csv", "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(
            [f"term_{i}" for i in range(1, 8)] + ["lhs", "residual", "h", "N", "seed"]
        )
        for seed, rep in rows:
            writer.writerow(
                [repr(float(v)) for v in rep.terms]
                + [
                    repr(rep.lhs),
                    repr(rep.residual),
                    repr(scenario.config.h),
                    str(scenario.config.N),
                    str(seed),
                ]
            )
    worst = max(abs(rep.residual) for _, rep in rows)
    print(f"ito-check: {len(rows)} run(s), max |residual| = {worst:.3g}")
    return EXIT_OK


def cmd_stability(cfg: dict, out: Path) -> int:
    scenario = _build(cfg)
    st = cfg["stability"]
    spec = scenario.lyapunov
    if spec is not None and st["alpha"] is not None:
        spec = replace(spec, alpha=float(st["alpha"]))

    trajs = _multi_seed_trajectories(scenario, int(st["n_seeds"]), int(cfg["threads"]))
    lead = trajs[0]
    report = {"scenario": scenario.name, "seeds": [t.seed for t in trajs]}
    failed = []

    if spec is not None:
        mode = "pointwise" if spec.family == "pointwise" else "integrated"
        diss = stability.dissipativity_check(
            spec, scenario.coefficients, lead.measure_at(lead.n_steps), mode=mode
        )
        comp = stability.comparison_check(spec, lead.measure_at(lead.n_steps))
        kcond = calculus.k_condition_monitor(lead, spec.F)
        report["hypothesis_checks"] = {
            "dissipativity_check": {"value": diss.value, "threshold": diss.threshold, "passed": diss.passed},
            "comparison_check": {
                "lower": comp.lower,
                "middle": comp.middle,
                "upper": comp.upper,
                "passed": comp.passed,
            },
            "k_condition_monitor": {"min_increment": kcond.min_increment, "passed": kcond.passed},
        }
        for name, check in report["hypothesis_checks"].items():
            if not check["passed"]:
                failed.append(name)

        if spec.family == "strict":
            bound = stability.exponential_bound_check(
                lead, spec, scenario.coefficients, c_h=scenario.c_h, n_boot=int(st["n_boot"])
            )
            curve = (spec.a2 / spec.a1) * np.exp(-spec.alpha * lead.grid) * lead.second_moments()[0]
        else:
            bound = stability.ultimate_boundedness_check(
                lead,
                spec=spec,
                coeffs=scenario.coefficients,
                c_h=scenario.c_h,
                n_boot=int(st["n_boot"]),
            )
            s_const, beta, m_const = stability.derive_ultimate_constants(spec)
            curve = s_const * np.exp(-beta * lead.grid) * lead.second_moments()[0] + m_const
        report["bounds"] = {
            "family": spec.family,
            "gates": {
                "dissipativity_passed": bound.gates.dissipativity_passed,
                "k_condition_passed": bound.gates.k_condition_passed,
                "failed_gate": bound.gates.failed_gate,
            },
            "max_violation": bound.max_violation,
            "passed": bound.passed,
        }
        if bound.gates.failed_gate is not None:
            if bound.gates.failed_gate not in failed:
                failed.append(bound.gates.failed_gate)
        elif not bound.passed:
            failed.append("bound_check")
        serialize.moments_to_csv(
            lead.grid,
            {"second_moment": lead.second_moments(), "bound": curve},
            out / "moments.csv",
        )
    else:
        serialize.moments_to_csv(
            lead.grid, {"second_moment": lead.second_moments()}, out / "moments.csv"
        )

    try:
        fit = stability.decay_fit(lead, burn_in=float(st["burn_in"]))
        report["decay"] = {"beta_hat": fit.beta_hat, "intercept": fit.intercept, "r2": fit.r2}
    except MvsdeError as exc:
        report["decay"] = {"error": str(exc)}

    report["as_fractions"] = stability.as_stability_estimate(
        trajs, st["eps_levels"], horizon_tail=float(st["horizon_tail"])
    )
    report["failed"] = failed
    serialize.write_json(report, out / "stability.json")
    if failed:
        print(f"stability: FAILED checks: {', '.join(failed)}")
        return EXIT_CHECK_FAILED
    print("stability: all requested checks passed")
    return EXIT_OK


def cmd_operators_test(cfg: dict, out: Path) -> int:
    reports = gallery_axiom_reports()
    serialize.write_json({"operators": reports}, out / "operators.json")
    bad = [r["label"] for r in reports if not r["passed"]]
    for r in reports:
        print(f"operators-test: {r['label']}: {'pass' if r['passed'] else 'FAIL'}")
    return EXIT_CHECK_FAILED if bad else EXIT_OK


def cmd_scenarios(cfg: dict, out: Path) -> int:
    for name in scenarios.scenario_names():
        scn = scenarios.build_scenario(name, {}, {"seed": 0})
        print(
            f"{name}: operator={scn.operator.label}, coefficients={scn.coefficients.label}, "
            f"defaults h={scn.config.h}, N={scn.config.N}, T={scn.config.T}"
        )
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "picard": cmd_picard,
    "ito-check": cmd_ito_check,
    "stability": cmd_stability,
    "operators-test": cmd_operators_test,
    "scenarios": cmd_scenarios,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvsde",
        description="Particle solver and numerical verifier for multivalued mean-field SDEs",
    )
    parser.add_argument("subcommand", choices=sorted(_COMMANDS))
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override scheme.seed")
    parser.add_argument("--out", type=str, default="mvsde_out", help="output directory")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="config override, repeatable (e.g. --set scheme.h=0.05)",
    )
    parser.add_argument("--threads", type=int, default=None, help="worker threads")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    needs_config = args.subcommand not in ("operators-test", "scenarios")
    try:
        if args.config is not None:
            raw = json.loads(Path(args.config).read_text())
        elif needs_config:
            raise ConfigError([("(file)", "--config is required for this subcommand")])
        else:
            raw = {"scenario": "null-drift", "scheme": {"seed": 0}}
        for assignment in args.overrides:
            apply_override(raw, assignment)
        if args.seed is not None:
            raw.setdefault("scheme", {})["seed"] = args.seed
        if args.threads is not None:
            raw["threads"] = args.threads
        cfg = normalize_config(raw)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        if isinstance(exc, ConfigError):
            for key, message in exc.issues:
                print(f"config error at {key}: {message}", file=sys.stderr)
        else:
            print(f"config error at (file): {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _COMMANDS[args.subcommand](cfg, out)
    except (StateBlowup, CoefficientBlowup, NotConverged) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MvsdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    raise SystemExit(main())
