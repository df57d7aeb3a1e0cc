"""Operator catalog: resolvent axioms and path diagnostics."""

import dataclasses

import numpy as np
import pytest

from mvsde import operators as ops
from mvsde.errors import DegenerateSet, MissingMetadata, NonFinite


def brute_force_prox_abs(x, lam, weight, radius=3.0, step=1e-4):
    """Independent oracle: grid minimization of 0.5*(u-x)^2 + lam*w*|u|."""
    grid = np.arange(-radius + x, radius + x, step)
    values = 0.5 * (grid - x) ** 2 + lam * weight * np.abs(grid)
    return grid[np.argmin(values)]


class TestResolve:
    def test_zero_operator_is_identity(self):
        op = ops.zero_operator(2)
        assert np.array_equal(ops.resolve(op, [3.0, -1.0], 0.5), [3.0, -1.0])

    def test_ball_projection(self):
        op = ops.normal_cone_ball([0.0, 0.0], 1.0)
        assert np.allclose(ops.resolve(op, [2.0, 0.0], 7.0), [1.0, 0.0])

    def test_soft_threshold_frozen_values(self):
        # expected values computed with brute_force_prox_abs (grid 1e-4):
        # x=0.3 -> 0.0, x=1.2 -> 0.7
        op = ops.subdifferential_abs([1.0])
        assert ops.resolve(op, 0.3, 0.5) == pytest.approx(0.0, abs=1e-12)
        assert ops.resolve(op, 1.2, 0.5) == pytest.approx(0.7, abs=1e-12)
        for x in (0.3, 1.2):
            assert brute_force_prox_abs(x, 0.5, 1.0) == pytest.approx(
                ops.resolve(op, x, 0.5), abs=1e-4
            )

    def test_soft_threshold_matches_brute_force_on_random_inputs(self):
        rng = np.random.default_rng(7)
        op = ops.subdifferential_abs([0.7])
        for x in rng.normal(scale=2.0, size=8):
            lam = float(rng.uniform(0.1, 2.0))
            closed = ops.resolve(op, float(x), lam)
            brute = brute_force_prox_abs(float(x), lam, 0.7)
            assert closed == pytest.approx(brute, abs=1e-4)

    def test_rejects_nonpositive_lambda(self):
        op = ops.zero_operator(1)
        with pytest.raises(ValueError):
            ops.resolve(op, 1.0, 0.0)
        with pytest.raises(ValueError):
            ops.resolve(op, 1.0, -1.0)

    def test_rejects_non_finite_points(self):
        op = ops.zero_operator(2)
        with pytest.raises(NonFinite):
            ops.resolve(op, [np.nan, 0.0], 1.0)
        with pytest.raises(NonFinite):
            ops.resolve(op, [np.inf, 0.0], 1.0)

    def test_empty_box_raises(self):
        with pytest.raises(DegenerateSet):
            ops.normal_cone_box([1.0], [0.0])
        with pytest.raises(DegenerateSet):
            ops.normal_cone_box([0.0], [0.0])


class TestYosida:
    def test_zero_operator(self):
        op = ops.zero_operator(2)
        assert np.allclose(ops.yosida(op, [4.0, -2.0], 1.0), 0.0)

    def test_halfline_box(self):
        op = ops.normal_cone_box([0.0], [np.inf])
        assert ops.yosida(op, -2.0, 1.0) == pytest.approx(-2.0)

    def test_quadratic_identity_matrix(self):
        # J = (I + M)^{-1} x = 2, (4 - 2)/1 = 2
        op = ops.subdifferential_quadratic([[1.0]])
        assert ops.yosida(op, 4.0, 1.0) == pytest.approx(2.0, abs=1e-12)

    def test_lipschitz_two_over_lambda(self):
        rng = np.random.default_rng(3)
        for op in ops.default_gallery():
            lam = 0.5
            x = rng.normal(scale=2.0, size=(200, op.dimension))
            y = rng.normal(scale=2.0, size=(200, op.dimension))
            ax = ops.yosida(op, x, lam)
            ay = ops.yosida(op, y, lam)
            lhs = np.linalg.norm(ax - ay, axis=-1)
            rhs = (2.0 / lam) * np.linalg.norm(x - y, axis=-1)
            assert np.all(lhs <= rhs + 1e-10)


class TestAxiomSampling:
    def test_gallery_reports_pass(self):
        for report in ops.gallery_axiom_reports(n_pairs=1000, tol=1e-10):
            assert report["passed"], report

    def test_nonexpansive_tolerance_tight(self):
        for report in ops.gallery_axiom_reports(n_pairs=1000, tol=1e-12):
            assert report["nonexpansive"]["max_violation"] <= 1e-12, report

    def test_projection_lambda_independence_exact(self):
        rng = np.random.default_rng(11)
        for op in ops.default_gallery():
            if not op.lambda_independent:
                continue
            x = rng.normal(scale=4.0, size=(64, op.dimension))
            a = ops.resolve(op, x, 1e-3)
            b = ops.resolve(op, x, 1e3)
            assert np.array_equal(a, b)

    def test_linear_resolve_residual(self):
        m = np.array([[1.0, 1.0], [-1.0, 1.0]])
        op = ops.linear_monotone(m)
        report = ops.axiom_report(op, n_pairs=500, matrix=m)
        assert report["linear_resolve"]["max_residual"] <= 1e-10


class TestGraphProbes:
    def test_catalog_probes_are_in_graph(self):
        for op in ops.default_gallery():
            assert op.value_probe is not None
            for x, y in op.graph_probes:
                assert op.value_probe(x, y), (op.label, x, y)

    def test_resolvent_co_domain(self):
        rng = np.random.default_rng(23)
        for op in ops.default_gallery():
            x = rng.normal(scale=4.0, size=(64, op.dimension))
            j = ops.resolve(op, x, 0.7)
            assert np.max(np.abs(op.domain_projection(j) - j)) <= 1e-12


def reflected_paths(grid, x0=1.0):
    x = np.maximum(x0 - grid, 0.0)
    k = -np.maximum(grid - x0, 0.0)
    return x, k


class TestPairingInequality:
    def test_zero_operator_zero_constraint(self):
        op = ops.zero_operator(1)
        grid = np.linspace(0.0, 1.0, 11)
        x = np.sin(grid)
        k = np.zeros_like(grid)
        report = ops.check_pairing_inequality(op, x, k, grid, [(np.array([2.0]), np.array([0.0]))])
        assert report.passed and report.min_value == pytest.approx(0.0, abs=1e-15)

    def test_reflected_closed_form_passes(self):
        op = ops.normal_cone_box([0.0], [np.inf])
        grid = np.linspace(0.0, 2.0, 41)
        x, k = reflected_paths(grid)
        report = ops.check_pairing_inequality(op, x, k, grid, op.graph_probes)
        assert report.passed, report

    def test_adversarial_constraint_fails(self):
        op = ops.normal_cone_box([0.0], [np.inf])
        grid = np.linspace(0.0, 2.0, 41)
        x, k = reflected_paths(grid)
        bad_k = np.where(grid > 1.0, -k, k)  # flip increments on the contact set
        probe = (np.array([1.0]), np.array([0.0]))
        report = ops.check_pairing_inequality(op, x, bad_k, grid, [probe])
        assert not report.passed

    def test_length_mismatch(self):
        op = ops.zero_operator(1)
        with pytest.raises(Exception):
            ops.check_pairing_inequality(op, np.zeros(5), np.zeros(4), np.linspace(0, 1, 5), [])

    def test_invalid_probe_rejected(self):
        op = ops.normal_cone_box([0.0], [np.inf])
        grid = np.linspace(0.0, 1.0, 5)
        x, k = reflected_paths(grid)
        with pytest.raises(ValueError):
            ops.check_pairing_inequality(op, x, k, grid, [(np.array([1.0]), np.array([5.0]))])


class TestInteriorVariationBound:
    def test_zero_constraint_trivial(self):
        op = ops.normal_cone_box([0.0], [np.inf])
        grid = np.linspace(0.0, 1.0, 11)
        x = 1.0 + 0.5 * np.sin(grid)
        report = ops.interior_variation_bound_check(op, x, np.zeros_like(x), grid)
        assert report.passed

    def test_reflected_with_stated_constants(self):
        base = ops.normal_cone_box([0.0], [np.inf])
        op = dataclasses.replace(
            base, interior_point=np.array([1.0]), variation_constants=(1.0, 0.0, 1.0)
        )
        grid = np.linspace(0.0, 2.0, 81)
        x, k = reflected_paths(grid)
        report = ops.interior_variation_bound_check(op, x, k, grid)
        assert report.passed, report

    def test_reflected_with_default_constants(self):
        op = ops.normal_cone_box([0.0], [np.inf])
        grid = np.linspace(0.0, 2.0, 81)
        x, k = reflected_paths(grid)
        assert ops.interior_variation_bound_check(op, x, k, grid).passed

    def test_missing_metadata(self):
        op = dataclasses.replace(ops.zero_operator(1), variation_constants=None)
        grid = np.linspace(0.0, 1.0, 5)
        with pytest.raises(MissingMetadata):
            ops.interior_variation_bound_check(op, np.zeros(5), np.zeros(5), grid)


class TestCatalogConfig:
    def test_from_config_roundtrip(self):
        op = ops.from_config({"kind": "normal_cone_ball", "center": [0.0, 0.0], "radius": 2.0})
        assert np.allclose(ops.resolve(op, [4.0, 0.0], 1.0), [2.0, 0.0])

    def test_unknown_kind(self):
        with pytest.raises(DegenerateSet):
            ops.from_config({"kind": "mystery"})
