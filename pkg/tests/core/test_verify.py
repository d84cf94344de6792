"""
Unit tests for the verify module.
"""

import os
import sys
import unittest
from types import SimpleNamespace
from unittest import mock

import numpy as np
import pytest

# Add parent directory to path to import core modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from core.certificate import Verdict
from core.errors import (
    InvalidParameterError,
    MonotonicityLostError,
    NoConvergenceError,
    OrderingViolatedError,
)
from core.field import DiscreteFunction, affine_field
from core.lagrangian import make_lagrangian
from core.mesh import Domain
from core.verify import (
    CompetitorSet,
    bump_function,
    calibration_forms_check,
    certify_calibration,
    certify_calibration_refined,
    certify_minimality,
    first_touching_leaf,
    fractional_matrix_1d,
    layer_error,
    layer_guess,
    null_lagrangian_check,
    relative_spread,
    search_calibration_violation,
    solve_layer_1d,
    strong_comparison_probe,
    sub_super_field_check,
)


def test_bump_function_support():
    bump = bump_function(np.array([0.5]), np.array([0.25]))
    values = bump(np.array([[0.5], [0.7], [0.8], [0.1]]))
    assert values[0] == pytest.approx(1.0)
    assert 0.0 < values[1] < 1.0
    assert values[2] == 0.0
    assert values[3] == 0.0


def test_relative_spread():
    assert relative_spread([1.0, 1.0, 1.0]) == 0.0
    assert relative_spread([2.0, 1.0]) == pytest.approx(0.5)
    assert relative_spread([0.0, 0.0]) == 0.0


class TestCompetitorSet(unittest.TestCase):
    """Competitor generation."""

    def setUp(self):
        self.domain = Domain.box([0.0], [1.0], [8])
        self.field = affine_field(1, (-1.0, 1.0))

    def test_invalid_recipe(self):
        with self.assertRaises(InvalidParameterError):
            CompetitorSet("wiggle")

    def test_seed_required(self):
        with self.assertRaises(InvalidParameterError):
            CompetitorSet(seed=None)

    def test_positive_count(self):
        with self.assertRaises(InvalidParameterError):
            CompetitorSet(count=0)

    def test_competitors_share_exterior_data(self):
        for recipe in ("bump", "leaf-blend", "clamped-shift"):
            ws = CompetitorSet(recipe, count=3, seed=7).generate(self.field, 0.0, self.domain)
            self.assertEqual(len(ws), 3)
            outside = np.array([[-2.0], [-0.25], [1.5], [4.0]])
            for w in ws:
                np.testing.assert_allclose(w(outside), self.field.leaf(0.0, outside))

    def test_generation_is_seeded(self):
        a = CompetitorSet(count=2, seed=3).generate(self.field, 0.0, self.domain)
        b = CompetitorSet(count=2, seed=3).generate(self.field, 0.0, self.domain)
        for wa, wb in zip(a, b):
            np.testing.assert_array_equal(wa.values, wb.values)

    def test_competitors_stay_inside_the_field(self):
        ws = CompetitorSet(count=4, seed=11, amplitude=2.0).generate(self.field, 0.5, self.domain)
        pts = self.domain.node_points()
        lo, hi = self.field.bounds(pts)
        for w in ws:
            self.assertTrue(np.all(w(pts) > lo))
            self.assertTrue(np.all(w(pts) < hi))

    def test_describe(self):
        info = CompetitorSet("leaf-blend", count=2, seed=5).describe()
        self.assertEqual(info["recipe"], "leaf-blend")
        self.assertEqual(info["seed"], 5)


class TestCalibrationCertificates(unittest.TestCase):
    """Calibration and minimality certificates on affine leaves."""

    def setUp(self):
        self.domain = Domain.box([0.0], [1.0], [8])
        self.field = affine_field(1, (-1.0, 1.0))

    def test_fractional_quadratic_calibration_passes(self):
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5})
        cert = certify_calibration(spec, self.field, 0.0, self.domain,
                                   CompetitorSet(count=3, seed=1), leaves=2)
        self.assertEqual(cert.verdict, Verdict.PASS)
        self.assertIsNone(cert.counterexample)
        self.assertEqual(len(cert.details["competitors"]), 3)

    def test_fractional_quadratic_minimality_passes(self):
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5})
        cert = certify_minimality(spec, self.field, 0.0, self.domain, CompetitorSet(count=3, seed=1))
        self.assertEqual(cert.verdict, Verdict.PASS)
        for row in cert.details["competitors"]:
            self.assertGreaterEqual(row["margin"], -cert.tolerance)

    def test_nonelliptic_calibration_fails_below_energy(self):
        spec = make_lagrangian("custom-table", {"preset": "convex-nonelliptic"})
        cert = certify_calibration(spec, self.field, 0.0, self.domain,
                                   CompetitorSet(count=2, seed=2), leaves=2)
        self.assertEqual(cert.verdict, Verdict.FAIL)
        self.assertEqual(cert.counterexample["clause"], "calibration-below-energy")

    def test_violation_search_finds_counterexample(self):
        spec = make_lagrangian("custom-table", {"preset": "convex-nonelliptic"})
        cert = search_calibration_violation(spec, self.field, 0.0, self.domain, budget=5, seed=4)
        self.assertEqual(cert.verdict, Verdict.FAIL)
        self.assertIn("trial", cert.counterexample)
        self.assertGreater(cert.counterexample["calibration"], cert.counterexample["energy"])

    def test_refined_calibration_keeps_its_margin(self):
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5})
        cert = certify_calibration_refined(spec, self.field, 0.0, self.domain,
                                           CompetitorSet(count=2, seed=1), leaves=2, levels=2)
        self.assertEqual(cert.verdict, Verdict.PASS)
        self.assertEqual(cert.details["levels"], 2)
        self.assertEqual(len(cert.details["worst_margins"]), 2)
        self.assertEqual(cert.trend, cert.details["worst_margins"])
        self.assertEqual(set(cert.details["parts"]),
                         {"calibration-level-0", "calibration-level-1", "calibration-refinement"})
        for margin in cert.details["worst_margins"]:
            self.assertGreaterEqual(margin, -cert.tolerance)

    def test_refined_calibration_needs_a_level(self):
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5})
        with self.assertRaises(InvalidParameterError):
            certify_calibration_refined(spec, self.field, 0.0, self.domain,
                                        CompetitorSet(count=1, seed=1), levels=0)

    def test_null_lagrangian_on_affine_leaves(self):
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5})
        cert = null_lagrangian_check(spec, self.field, 0.0, self.domain,
                                     CompetitorSet(count=3, seed=1), levels=2)
        self.assertEqual(cert.verdict, Verdict.PASS)
        spreads = cert.details["spreads"]
        self.assertEqual(len(spreads), 2)
        self.assertLessEqual(spreads[1], 0.4e-3)
        self.assertEqual(cert.trend, spreads)

    def test_calibration_forms_agree_on_affine_leaves(self):
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5})
        cert = calibration_forms_check(spec, self.field, 0.0, self.domain, CompetitorSet(count=2, seed=1))
        self.assertEqual(cert.verdict, Verdict.PASS)
        self.assertEqual(len(cert.details["competitors"]), 2)


def _scripted_spreads(values):
    return mock.patch("core.verify.calibration_defining",
                      side_effect=[SimpleNamespace(value=v) for v in values])


class TestNullLagrangianSpreads(unittest.TestCase):
    """Verdicts of the null-Lagrangian check on scripted calibration values."""

    def setUp(self):
        self.domain = Domain.box([0.0], [1.0], [4])
        self.ws = [object(), object()]

    def test_round_off_growth_is_not_growth(self):
        with _scripted_spreads([2.0, 2.0 - 2.98e-11, 2.0, 2.0 - 4.98e-11]):
            cert = null_lagrangian_check(None, None, 0.0, self.domain, self.ws, levels=2)
        self.assertEqual(cert.verdict, Verdict.PASS)
        self.assertGreater(cert.details["spreads"][1], cert.details["spreads"][0])

    def test_growing_spread_fails(self):
        with _scripted_spreads([1.0, 0.9999, 1.0, 0.9995]):
            cert = null_lagrangian_check(None, None, 0.0, self.domain, self.ws, levels=2)
        self.assertEqual(cert.verdict, Verdict.FAIL)
        self.assertFalse(cert.counterexample["improving"])

    def test_refined_spread_must_shrink_enough(self):
        with _scripted_spreads([1.0, 0.9992, 1.0, 0.9995]):
            cert = null_lagrangian_check(None, None, 0.0, self.domain, self.ws, levels=2)
        self.assertEqual(cert.verdict, Verdict.FAIL)
        self.assertTrue(cert.counterexample["improving"])
        self.assertLess(cert.margin, 0.0)


class TestComparison(unittest.TestCase):
    """Sub/super fields, strong comparison and touching leaves."""

    def test_affine_leaves_are_solutions(self):
        domain = Domain.box([0.0], [1.0], [8])
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5})
        cert = sub_super_field_check(spec, affine_field(1, (-1.0, 1.0)), 0.0, domain,
                                     leaves=1, points=4, tol=1e-5)
        self.assertEqual(cert.verdict, Verdict.PASS)
        self.assertTrue(cert.details["supersolutions_above"])
        self.assertTrue(cert.details["subsolutions_below"])

    def test_strong_comparison_at_touching_point(self):
        domain = Domain.box([-1.0], [1.0], [16])
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5})
        u = DiscreteFunction.from_callable(domain, lambda p: np.zeros(p.shape[0]))
        v = DiscreteFunction.clamped(domain, lambda p: p[:, 0] ** 2)
        cert = strong_comparison_probe(spec, domain, u, v, [0.0])
        self.assertEqual(cert.verdict, Verdict.PASS)
        self.assertGreater(cert.margin, 0.0)

    def test_strong_comparison_needs_ordering(self):
        domain = Domain.box([-1.0], [1.0], [16])
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5})
        u = DiscreteFunction.from_callable(domain, lambda p: np.zeros(p.shape[0]))
        v = DiscreteFunction.clamped(domain, lambda p: p[:, 0] ** 2)
        with self.assertRaises(OrderingViolatedError):
            strong_comparison_probe(spec, domain, v, u, [0.0])

    def test_first_touching_leaf_from_above(self):
        domain = Domain.box([0.0], [1.0], [8])
        fld = affine_field(1, (-1.0, 1.0))
        touch = first_touching_leaf(fld, lambda p: p[:, 0] + 0.5 - (p[:, 0] - 0.5) ** 2, domain, 0.0)
        self.assertAlmostEqual(touch.t1, 0.5, places=10)
        self.assertAlmostEqual(touch.x0[0], 0.5, places=10)
        self.assertEqual(touch.kind, "interior")
        self.assertEqual(touch.side, "above")

    def test_first_touching_leaf_on_anchor(self):
        domain = Domain.box([0.0], [1.0], [8])
        fld = affine_field(1, (-1.0, 1.0))
        self.assertIsNone(first_touching_leaf(fld, lambda p: p[:, 0], domain, 0.0))

    def test_first_touching_leaf_bad_side(self):
        domain = Domain.box([0.0], [1.0], [8])
        with self.assertRaises(InvalidParameterError):
            first_touching_leaf(affine_field(1), lambda p: p[:, 0], domain, 0.0, side="middle")


class TestLayerSolver(unittest.TestCase):
    """Finite-difference fractional Laplacian and the layer iteration."""

    def test_constants_are_annihilated(self):
        x = np.linspace(-5.0, 5.0, 41)
        M, b = fractional_matrix_1d(x, 0.5, 1.0 / np.pi, 1.0, 1.0)
        np.testing.assert_allclose(M @ np.ones(x.size) + b, 0.0, atol=1e-10)

    def test_matrix_is_symmetric(self):
        x = np.linspace(-2.0, 2.0, 21)
        M, _ = fractional_matrix_1d(x, 0.3, 1.0, -1.0, 1.0)
        np.testing.assert_allclose(M, M.T)

    def test_layer_guess(self):
        x = np.array([-np.inf, 0.0, np.inf])
        np.testing.assert_allclose(layer_guess("odd", x), [-1.0, 0.0, 1.0])
        np.testing.assert_allclose(layer_guess("even", x), [1.0, 0.5, 1.0])
        with self.assertRaises(InvalidParameterError):
            layer_guess("lopsided", x)

    def test_solver_needs_reaction(self):
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5})
        with self.assertRaises(InvalidParameterError):
            solve_layer_1d(spec)

    def test_solver_reports_missing_convergence(self):
        spec = make_lagrangian("fractional-p-dirichlet-with-reaction",
                               {"s": 0.5, "p": 2.0, "reaction": "sine-layer"})
        with self.assertRaises(NoConvergenceError):
            solve_layer_1d(spec, half_width=5.0, nodes=51, max_iter=1)

    def test_layer_error_of_exact_profile(self):
        domain = Domain.box([-10.0], [10.0], [200])
        w = DiscreteFunction.from_callable(domain, lambda p: (2.0 / np.pi) * np.arctan(p[:, 0]))
        err, shift = layer_error(w)
        self.assertLess(err, 1e-12)
        self.assertAlmostEqual(shift, 0.0, places=12)

    def test_odd_guess_converges_to_the_arctan_layer(self):
        spec = make_lagrangian("fractional-p-dirichlet-with-reaction",
                               {"s": 0.5, "p": 2.0, "reaction": "sine-layer"})
        w = solve_layer_1d(spec)
        err, shift = layer_error(w)
        self.assertLess(err, 1e-2)
        self.assertAlmostEqual(shift, 0.0, places=6)
        self.assertTrue(np.all(np.diff(w.values) > 0.0))

    def test_even_guess_loses_monotonicity(self):
        spec = make_lagrangian("fractional-p-dirichlet-with-reaction",
                               {"s": 0.5, "p": 2.0, "reaction": "sine-layer"})
        with self.assertRaises(MonotonicityLostError):
            solve_layer_1d(spec, half_width=10.0, nodes=201, guess="even")


if __name__ == '__main__':
    unittest.main()
