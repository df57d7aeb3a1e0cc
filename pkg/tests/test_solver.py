"""Splitting scheme, frozen-flow runs, fixed-point iteration, monitors."""

from dataclasses import replace

import numpy as np
import pytest
from conftest import empirical_order

from mvsde import noise as noise_mod
from mvsde import operators as ops
from mvsde import scenarios
from mvsde.errors import CoefficientBlowup, GridMismatch, StateBlowup, ZeroDenominator
from mvsde.measures import EmpiricalMeasure, MeasureFlow, flow_distance
from mvsde.solver import (
    Coefficients,
    SchemeConfig,
    contraction_ratio,
    initial_positions,
    moment_monitor,
    picard,
    simulate,
    solve_frozen_flow,
    step,
)
from mvsde.stability import bootstrap_se_of_moments


def run_scenario(name, params=None, **scheme):
    scheme.setdefault("seed", 0)
    scn = scenarios.build_scenario(name, params or {}, scheme)
    return scn, simulate(scn.operator, scn.coefficients, scn.config)


class TestStep:
    def test_static_fixed_point(self):
        op = ops.zero_operator(1)
        coeffs = scenarios.zero_coefficients(1)
        x = np.array([[0.7]])
        mu = EmpiricalMeasure(x)
        x2, k2, kvar2, dk, _ = step(op, coeffs, x, np.zeros_like(x), np.zeros(1), mu, 0.1, np.zeros((1, 1)))
        assert np.array_equal(x2, x)
        assert np.all(dk == 0.0) and np.all(k2 == 0.0) and np.all(kvar2 == 0.0)

    def test_reflected_hand_arithmetic(self):
        # X=0.05, h=0.1, b=-1: Y=-0.05, X'=0, dK=-0.05
        op = ops.normal_cone_box([0.0], [np.inf])
        coeffs = scenarios.constant_drift(1.0)
        x = np.array([[0.05]])
        mu = EmpiricalMeasure(x)
        x2, k2, kvar2, dk, _ = step(op, coeffs, x, np.zeros_like(x), np.zeros(1), mu, 0.1, np.zeros((1, 1)))
        assert x2[0, 0] == pytest.approx(0.0, abs=1e-15)
        assert dk[0, 0] == pytest.approx(-0.05)
        assert kvar2[0] == pytest.approx(0.05)

    def test_explicit_euler(self):
        op = ops.zero_operator(1)
        coeffs = scenarios.mean_field_linear(1.0, 0.0, 0.0)
        x = np.array([[1.0]])
        mu = EmpiricalMeasure(x)
        x2, _, _, dk, _ = step(op, coeffs, x, np.zeros_like(x), np.zeros(1), mu, 0.1, np.zeros((1, 1)))
        assert x2[0, 0] == pytest.approx(0.9)
        assert np.all(dk == 0.0)


class TestSimulateOracles:
    @pytest.mark.parametrize("h", [0.1, 0.05, 0.025])
    def test_reflected_drift_closed_form(self, h):
        scn, traj = run_scenario("reflected-drift", h=h)
        x_oracle, k_oracle = scenarios.reflected_drift_oracle(traj.grid, 1.0, 1.0)
        assert np.max(np.abs(traj.X[:, 0, 0] - x_oracle)) <= 2 * h
        assert np.max(np.abs(traj.K[:, 0, 0] - k_oracle)) <= 2 * h

    def test_reflected_drift_h_refinement(self):
        hs = [0.1, 0.05, 0.025, 0.0125]
        errors = []
        for h in hs:
            _, traj = run_scenario("reflected-drift", h=h)
            x_oracle, _ = scenarios.reflected_drift_oracle(traj.grid, 1.0, 1.0)
            errors.append(float(np.max(np.abs(traj.X[:, 0, 0] - x_oracle))))
        floor = 1e-12
        assert all(b <= a + floor for a, b in zip(errors, errors[1:]))
        assert empirical_order(hs, errors) >= 0.8

    def test_misaligned_hitting_time_first_order(self):
        # x0 = 0.95 puts the contact time off the grid: genuine O(h) error
        hs = [0.1, 0.05, 0.025, 0.0125]
        errors = []
        for h in hs:
            scn, traj = run_scenario("reflected-drift", {"x0": 0.95}, h=h)
            x_oracle, _ = scenarios.reflected_drift_oracle(traj.grid, 0.95, 1.0)
            errors.append(float(np.max(np.abs(traj.X[:, 0, 0] - x_oracle))))
        assert errors[0] > 1e-3  # genuinely away from the floor
        assert all(b <= a + 1e-12 for a, b in zip(errors, errors[1:]))
        assert empirical_order(hs, errors) >= 0.8

    def test_static_scenario_constant(self):
        _, traj = run_scenario("null-drift", N=4)
        assert np.all(traj.X == traj.X[0])
        assert np.all(traj.K == 0.0)

    def test_mean_field_ou_moment_odes(self):
        scn, traj = run_scenario("mean-field-ou", N=800, T=1.0, h=0.01, seed=2)
        p = scn.parameters
        mean_oracle, m2_oracle = scenarios.mean_field_moment_oracle(
            traj.grid, p["x0"], p["a"], p["b_bar"], p["s"]
        )
        se_mean = bootstrap_se_of_moments(traj.X[:, :, 0], seed=1)
        se_m2 = bootstrap_se_of_moments(np.sum(traj.X**2, axis=2), seed=2)
        slack = 5 * scn.config.h
        assert np.all(np.abs(traj.means()[:, 0] - mean_oracle) <= 3 * se_mean + slack)
        assert np.all(np.abs(traj.second_moments() - m2_oracle) <= 3 * se_m2 + slack)


class TestFrozenFlow:
    def test_self_consistent_fixed_point_bitwise(self):
        scn, traj = run_scenario("mean-field-ou", N=64, T=0.5, h=0.01, seed=9)
        frozen = solve_frozen_flow(scn.operator, scn.coefficients, traj.flow, scn.config)
        assert np.array_equal(frozen.X, traj.X)
        assert np.array_equal(frozen.K, traj.K)

    def test_frozen_dirac_linear_motion(self):
        # b(x, mu) = mean(mu), frozen at delta_c: X = x0 + c*t exactly
        coeffs = scenarios.mean_field_linear(0.0, 1.0, 0.0)
        config = SchemeConfig(h=0.05, N=3, T=1.0, seed=1, initial=0.25)
        c = 2.0
        flow = MeasureFlow.constant(config.grid(), EmpiricalMeasure([[c]]))
        traj = solve_frozen_flow(ops.zero_operator(1), coeffs, flow, config)
        assert np.allclose(traj.X[:, 0, 0], 0.25 + c * traj.grid, atol=1e-12)

    def test_frozen_dirac_exponential_decay(self):
        # b(x, mu) = -x + mean(mu), frozen at delta_0: X = x0*exp(-t) + O(h)
        coeffs = scenarios.mean_field_linear(1.0, 1.0, 0.0)
        config = SchemeConfig(h=0.001, N=1, T=1.0, seed=1, initial=1.0)
        flow = MeasureFlow.constant(config.grid(), EmpiricalMeasure([[0.0]]))
        traj = solve_frozen_flow(ops.zero_operator(1), coeffs, flow, config)
        assert np.max(np.abs(traj.X[:, 0, 0] - np.exp(-traj.grid))) <= 2 * config.h

    def test_grid_mismatch(self):
        scn = scenarios.build_scenario("null-drift", {}, {"seed": 0})
        flow = MeasureFlow.constant([0.0, 1.0], EmpiricalMeasure([[0.0]]))
        with pytest.raises(GridMismatch):
            solve_frozen_flow(scn.operator, scn.coefficients, flow, scn.config)


class TestPicard:
    def test_huge_tolerance_single_sweep(self):
        scn = scenarios.build_scenario("picard-window", {}, {"seed": 4, "N": 64})
        _, diag = picard(scn.operator, scn.coefficients, scn.config, tol=1e6)
        assert diag.converged and diag.iterations == 1

    def test_static_scenario_one_iteration(self):
        scn = scenarios.build_scenario("null-drift", {}, {"seed": 4})
        _, diag = picard(scn.operator, scn.coefficients, scn.config, tol=1e-4)
        assert diag.converged and diag.iterations == 1 and diag.deltas[0] == 0.0

    def test_mu_independent_two_sweeps(self):
        # the map is constant in its argument: the second sweep reproduces
        # the first flow exactly (common noise), delta drops to 0
        scn = scenarios.build_scenario("contraction", {}, {"seed": 4, "h": 0.01, "N": 16})
        _, diag = picard(scn.operator, scn.coefficients, scn.config, tol=1e-12)
        assert diag.converged and diag.iterations == 2
        assert diag.deltas[-1] == 0.0

    def test_geometric_decay_on_contractive_window(self):
        scn = scenarios.build_scenario("picard-window", {}, {"seed": 5})
        flow, diag = picard(scn.operator, scn.coefficients, scn.config, tol=1e-4, max_iter=12)
        assert diag.converged and diag.iterations <= 12
        ratios = [b / a for a, b in zip(diag.deltas, diag.deltas[1:])]
        assert all(r <= 0.5 for r in ratios)

    def test_fixed_point_is_self_consistent(self):
        scn = scenarios.build_scenario("picard-window", {}, {"seed": 6, "N": 128})
        flow, diag = picard(scn.operator, scn.coefficients, scn.config, tol=1e-6, max_iter=20)
        assert diag.converged
        noise = noise_mod.gaussian_increments(
            scn.config.seed, scn.config.n_steps, scn.config.N, scn.coefficients.m
        )
        again = solve_frozen_flow(scn.operator, scn.coefficients, flow, scn.config, noise=noise)
        assert flow_distance(again.flow, flow) < 1e-6


class TestContractionRatio:
    def _flow_pair(self, scn, seed):
        config = replace(scn.config, seed=seed)
        x0 = initial_positions(config, scn.coefficients.d)
        flow_a = MeasureFlow.constant(config.grid(), EmpiricalMeasure(x0))
        noise = noise_mod.gaussian_increments(
            config.seed, config.n_steps, config.N, scn.coefficients.m
        )
        flow_b = solve_frozen_flow(scn.operator, scn.coefficients, flow_a, config, noise=noise).flow
        return config, flow_a, flow_b

    def test_mu_independent_ratio_zero(self):
        scn = scenarios.build_scenario("contraction", {}, {"seed": 3, "h": 0.01, "N": 8})
        config, flow_a, flow_b = self._flow_pair(scn, 3)
        assert contraction_ratio(scn.operator, scn.coefficients, config, flow_a, flow_b) == 0.0

    def test_contractive_window_below_half(self):
        scn = scenarios.build_scenario("picard-window", {}, {"seed": 0, "N": 200})
        for seed in (0, 1):
            config, flow_a, flow_b = self._flow_pair(scn, seed)
            ratio = contraction_ratio(scn.operator, scn.coefficients, config, flow_a, flow_b)
            assert 0.0 < ratio < 0.5

    def test_long_window_can_expand(self):
        # with mean-field gain above the damping the one-sweep map amplifies
        scn = scenarios.build_scenario(
            "picard-window", {"b_bar": 1.5}, {"seed": 11, "T": 10.0, "h": 0.01, "N": 100}
        )
        config, flow_a, flow_b = self._flow_pair(scn, 11)
        ratio = contraction_ratio(scn.operator, scn.coefficients, config, flow_a, flow_b)
        assert ratio > 1.0

    def test_zero_denominator(self):
        scn = scenarios.build_scenario("picard-window", {}, {"seed": 0, "N": 8})
        flow = MeasureFlow.constant(scn.config.grid(), EmpiricalMeasure([[1.0]] * 8))
        with pytest.raises(ZeroDenominator):
            contraction_ratio(scn.operator, scn.coefficients, scn.config, flow, flow)


class TestInvariants:
    def test_determinism_bitwise(self):
        scn, traj_a = run_scenario("mean-field-ou", N=128, T=0.5, h=0.01, seed=42)
        traj_b = simulate(scn.operator, scn.coefficients, scn.config)
        assert np.array_equal(traj_a.X, traj_b.X)
        assert np.array_equal(traj_a.K, traj_b.K)
        assert np.array_equal(traj_a.dW, traj_b.dW)

    def test_constraint_increment_is_resolvent_residual(self):
        scn, traj = run_scenario("reflected-drift", h=0.05, N=4)
        for k in range(traj.n_steps):
            y = traj.X[k + 1] + traj.dK[k]
            again = ops.resolve(scn.operator, y, scn.config.h)
            assert np.max(np.abs(again - traj.X[k + 1])) <= 1e-10

    def test_domain_invariance_ball(self):
        scn, traj = run_scenario("reflected-ou-ball", N=64, T=1.0, seed=1)
        radii = np.linalg.norm(traj.X, axis=-1)
        assert np.max(radii) <= 1.0 + 1e-12

    def test_constraint_starts_at_zero_and_variation_monotone(self):
        _, traj = run_scenario("reflected-ou-ball", N=32, T=1.0, seed=2)
        assert np.all(traj.K[0] == 0.0)
        assert np.all(np.diff(traj.k_variation, axis=0) >= -1e-15)

    def test_exchangeability_under_noise_permutation(self):
        scn = scenarios.build_scenario("mean-field-ou", {}, {"seed": 8, "N": 32, "T": 0.2, "h": 0.01})
        noise = noise_mod.gaussian_increments(8, scn.config.n_steps, 32, 1)
        perm = np.random.default_rng(0).permutation(32)
        traj = simulate(scn.operator, scn.coefficients, scn.config, noise=noise)
        traj_p = simulate(scn.operator, scn.coefficients, scn.config, noise=noise[:, perm, :])
        assert np.array_equal(traj_p.X[:, :, 0], traj.X[:, perm, 0])
        for k in range(0, traj.n_steps + 1, 5):
            assert np.array_equal(np.sort(traj.X[k, :, 0]), np.sort(traj_p.X[k, :, 0]))

    @pytest.mark.parametrize("name", ["reflected-drift", "soft-threshold-flow", "reflected-ou-ball"])
    def test_discrete_pairing_on_simulated_paths(self, name):
        scn, traj = run_scenario(name, N=16, T=1.0, seed=3)
        report = ops.check_pairing_inequality(
            scn.operator, traj.X, traj.K, traj.grid, scn.operator.graph_probes
        )
        assert report.passed, report

    def test_noise_prefix_property(self):
        short = noise_mod.gaussian_increments(123, 10, 7, 2)
        long = noise_mod.gaussian_increments(123, 25, 7, 2)
        assert np.array_equal(long[:10], short)

    def test_trajectory_arrays_frozen(self):
        _, traj = run_scenario("null-drift")
        with pytest.raises(ValueError):
            traj.X[0, 0, 0] = 1.0


class TestGuards:
    def test_state_blowup(self):
        coeffs = Coefficients(
            d=1, m=1, b=lambda x, mu: 1e6 * x, sigma=lambda x, mu: np.zeros((1, 1))
        )
        config = SchemeConfig(h=0.1, N=1, T=2.0, seed=0, initial=1.0)
        with pytest.raises(StateBlowup):
            simulate(ops.zero_operator(1), coeffs, config)

    def test_coefficient_blowup(self):
        coeffs = Coefficients(
            d=1, m=1, b=lambda x, mu: np.full_like(x, np.nan), sigma=lambda x, mu: np.zeros((1, 1))
        )
        config = SchemeConfig(h=0.1, N=1, T=1.0, seed=0, initial=1.0)
        with pytest.raises(CoefficientBlowup):
            simulate(ops.zero_operator(1), coeffs, config)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SchemeConfig(h=0.0, N=1, T=1.0, seed=0)
        with pytest.raises(ValueError):
            SchemeConfig(h=0.1, N=0, T=1.0, seed=0)
        with pytest.raises(ValueError):
            SchemeConfig(h=0.1, N=1, T=0.05, seed=0)
        with pytest.raises(ValueError):
            SchemeConfig(h=0.1, N=1, T=1.05, seed=0)

    def test_sampled_initial_condition(self):
        config = SchemeConfig(
            h=0.1, N=2000, T=0.1, seed=5, initial={"kind": "normal", "mean": 1.0, "std": 0.5}
        )
        x0 = initial_positions(config, 1)
        assert abs(x0.mean() - 1.0) < 0.05
        assert abs(x0.std() - 0.5) < 0.05
        assert np.array_equal(x0, initial_positions(config, 1))


class TestMomentMonitor:
    def test_static(self):
        _, traj = run_scenario("null-drift", N=2)
        report = moment_monitor(traj, a=[0.0])
        assert report.sup_second_moment == pytest.approx(1.0)

    def test_reflected(self):
        _, traj = run_scenario("reflected-drift")
        report = moment_monitor(traj, a=[1.0])
        assert report.sup_second_moment == pytest.approx(1.0, abs=1e-12)
        assert report.interior_norm_sq == pytest.approx(1.0)

    def test_mean_field_ou(self):
        scn, traj = run_scenario("mean-field-ou", N=800, T=1.0, h=0.01, seed=4)
        p = scn.parameters
        _, m2_oracle = scenarios.mean_field_moment_oracle(
            traj.grid, p["x0"], p["a"], p["b_bar"], p["s"]
        )
        report = moment_monitor(traj, a=[0.0])
        se = bootstrap_se_of_moments(np.sum(traj.X**2, axis=2), seed=3)
        assert abs(report.sup_second_moment - m2_oracle.max()) <= 3 * float(se.max()) + 5 * scn.config.h
        assert np.isfinite(report.sup_second_moment)
