"""
Unit tests for the nonlocal total variation module.

With indicator functions the coarea formula holds pair by pair, and
sign(phi(x) - phi(y)) (1_F(x) - 1_F(y)) equals |1_F(x) - 1_F(y)| when
F is a superlevel set of phi, so these identities hold on the grid.
"""

import os
import sys
import unittest

import numpy as np
from scipy import special

# Add parent directory to path to import core modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from core.certificate import Verdict
from core.errors import InvalidParameterError, NotOnBoundaryError, PerimeterInfiniteError
from core.field import DiscreteFunction, shift_field
from core.lagrangian import make_kernel
from core.mesh import Domain
from core.nltv import (
    LevelSetFunction,
    NodeSet,
    coarea_check,
    level_grid,
    nonlocal_mean_curvature,
    nonlocal_perimeter,
    nltv_calibration_crosscheck,
    nltv_energy,
    perimeter_calibration,
    total_variation_spec,
)
from core.verify import bump_function


class TestNodeSet(unittest.TestCase):
    """Sets on the mesh and their exterior continuation."""

    def setUp(self):
        self.domain = Domain.box([0.0], [1.0], [8])

    def test_interval_membership(self):
        E = NodeSet.interval(self.domain, 0.25, 0.75)
        np.testing.assert_array_equal(E.contains([[0.1], [0.5], [0.9], [2.0]]), [False, True, False, False])
        self.assertEqual(int(np.count_nonzero(E.mask)), 3)

    def test_complement(self):
        E = NodeSet.interval(self.domain, 0.25, 0.75).complement()
        np.testing.assert_array_equal(E([[0.1], [0.5]]), [1.0, 0.0])

    def test_halfspace_validation(self):
        with self.assertRaises(InvalidParameterError):
            NodeSet.halfspace(self.domain, [0.0])
        with self.assertRaises(InvalidParameterError):
            NodeSet.box(self.domain, [0.5], [0.5])

    def test_boundary_points(self):
        E = NodeSet.interval(self.domain, 0.25, 0.75)
        points = E.boundary_points()
        self.assertEqual(len(points), 2)
        self.assertAlmostEqual(points[0], 0.25, places=10)
        self.assertAlmostEqual(points[1], 0.75, places=10)

    def test_boundary_points_need_1d(self):
        square = Domain.box([0.0, 0.0], [1.0, 1.0], [2, 2])
        with self.assertRaises(InvalidParameterError):
            NodeSet.halfspace(square, [1.0, 0.0], 0.5).boundary_points()

    def test_indicator_and_csv(self):
        E = NodeSet.superlevel(self.domain, lambda p: p[:, 0], 0.5)
        one = E.indicator()
        np.testing.assert_array_equal(one([[0.75], [3.0], [-1.0]]), [1.0, 1.0, 0.0])
        self.assertTrue(E.to_csv().startswith("node,x,member,exterior_rule"))
        self.assertEqual(E.describe()["nodes_inside"], 4)

    def test_trivial_sets(self):
        pts = self.domain.node_points()
        self.assertTrue(NodeSet.empty(self.domain).is_trivial(pts))
        self.assertTrue(NodeSet.full(self.domain).is_trivial(pts))
        self.assertFalse(NodeSet.interval(self.domain, 0.25, 0.75).is_trivial(pts))


class TestLevels(unittest.TestCase):
    """Level grids and level-set functions."""

    def test_midpoint_grid(self):
        levels, weights = level_grid(0.0, 1.0, 4)
        np.testing.assert_allclose(levels, [0.125, 0.375, 0.625, 0.875])
        np.testing.assert_allclose(weights, 0.25)

    def test_trapezoid_grid(self):
        levels, weights = level_grid(0.0, 1.0, 3, grid="trapezoid")
        np.testing.assert_allclose(levels, [0.0, 0.5, 1.0])
        np.testing.assert_allclose(weights, [0.25, 0.5, 0.25])

    def test_degenerate_range(self):
        levels, weights = level_grid(2.0, 2.0, 8)
        np.testing.assert_array_equal(levels, [2.0])
        np.testing.assert_array_equal(weights, [0.0])

    def test_invalid_grids(self):
        with self.assertRaises(InvalidParameterError):
            level_grid(0.0, 1.0, 4, grid="simpson")
        with self.assertRaises(InvalidParameterError):
            level_grid(0.0, 1.0, 1)

    def test_sublevel_sets_are_nested(self):
        domain = Domain.box([0.0], [1.0], [8])
        w = NodeSet.interval(domain, 0.25, 0.75).indicator()
        lsf = LevelSetFunction.of(w, count=4)
        self.assertTrue(lsf.nested())
        self.assertEqual(len(lsf.sets()), 4)


class TestPerimeters(unittest.TestCase):
    """Perimeters, total variation and perimeter calibrations."""

    def setUp(self):
        self.domain = Domain.box([0.0], [1.0], [8])
        self.kernel = make_kernel("truncated", 1, radius=0.25)

    def test_total_variation_spec(self):
        spec = total_variation_spec(self.kernel)
        self.assertEqual(spec.id, "nonlocal-total-variation")
        self.assertEqual(spec.growth_power, 1.0)

    def test_perimeter_of_trivial_sets(self):
        self.assertEqual(nonlocal_perimeter(self.kernel, NodeSet.empty(self.domain)).value, 0.0)
        self.assertEqual(nonlocal_perimeter(self.kernel, NodeSet.full(self.domain)).value, 0.0)

    def test_perimeter_of_complement(self):
        E = NodeSet.interval(self.domain, 0.25, 0.75)
        p = nonlocal_perimeter(self.kernel, E).value
        self.assertGreater(p, 0.0)
        self.assertAlmostEqual(nonlocal_perimeter(self.kernel, E.complement()).value, p, places=12)

    def test_perimeter_equals_energy_of_indicator(self):
        E = NodeSet.interval(self.domain, 0.25, 0.75)
        self.assertAlmostEqual(nltv_energy(self.kernel, self.domain, E.indicator()).value,
                               nonlocal_perimeter(self.kernel, E).value, places=12)

    def test_infinite_fractional_perimeter(self):
        kernel = make_kernel("fractional", 1, s=0.6)
        with self.assertRaises(PerimeterInfiniteError):
            nonlocal_perimeter(kernel, NodeSet.interval(self.domain, 0.25, 0.75))

    def test_coarea_for_indicator(self):
        w = NodeSet.interval(self.domain, 0.25, 0.75).indicator()
        cert = coarea_check(self.kernel, self.domain, w, counts=(4, 8))
        self.assertEqual(cert.verdict, Verdict.PASS)
        self.assertEqual(len(cert.trend), 2)

    def test_perimeter_calibration_is_exact_on_superlevel_sets(self):
        phi = lambda p: p[:, 0]
        F = NodeSet.superlevel(self.domain, phi, 0.5)
        report = perimeter_calibration(self.kernel, self.domain, phi, F)
        self.assertAlmostEqual(report.value, nonlocal_perimeter(self.kernel, F).value, places=12)

    def test_perimeter_calibration_bounds_other_sets(self):
        phi = lambda p: p[:, 0]
        F = NodeSet.interval(self.domain, 0.25, 0.75)
        report = perimeter_calibration(self.kernel, self.domain, phi, F)
        self.assertLessEqual(report.value, nonlocal_perimeter(self.kernel, F).value + 1e-12)


class TestMeanCurvature(unittest.TestCase):
    """Nonlocal mean curvature at boundary points."""

    def setUp(self):
        self.domain = Domain.box([0.0], [1.0], [8])

    def test_halfline_has_zero_curvature(self):
        kernel = make_kernel("truncated", 1, radius=0.2)
        E = NodeSet.halfspace(self.domain, [1.0], 0.5)
        self.assertAlmostEqual(nonlocal_mean_curvature(kernel, E, [0.5]), 0.0, places=10)

    def test_interval_with_gaussian_kernel(self):
        width = 0.2
        kernel = make_kernel("gaussian", 1, width=width)
        E = NodeSet.interval(self.domain, 0.25, 0.75)
        expected = width * np.sqrt(np.pi) * special.erfc(0.5 / width)
        self.assertAlmostEqual(nonlocal_mean_curvature(kernel, E, [0.25]), expected, places=6)

    def test_point_off_the_boundary(self):
        kernel = make_kernel("truncated", 1, radius=0.2)
        E = NodeSet.interval(self.domain, 0.25, 0.75)
        with self.assertRaises(NotOnBoundaryError):
            nonlocal_mean_curvature(kernel, E, [0.5])


class TestCalibrationCrosscheck(unittest.TestCase):
    """The three forms of the NLTV calibration on a bumped ramp."""

    def setUp(self):
        self.domain = Domain.box([0.0], [1.0], [32], exterior_cells=16)
        self.kernel = make_kernel("truncated", 1, radius=0.5)
        self.ramp = DiscreteFunction.clamped(self.domain, lambda p: p[:, 0], lipschitz=1.0)
        self.field = shift_field(self.ramp, lambda p: np.ones(p.shape[0]), (-2.0, 2.0), 1)

    def test_forms_agree_on_bumped_ramp(self):
        bump = bump_function(np.array([0.5]), np.array([0.25]))
        w = self.ramp.with_formula(lambda p: self.ramp(p) + 0.1 * bump(p))
        cert = nltv_calibration_crosscheck(self.kernel, self.field, 0.0, self.domain, w)
        self.assertEqual(cert.verdict, Verdict.PASS)
        self.assertEqual(cert.property_id, "nltv-calibration-forms")
        self.assertEqual([row["levels"] for row in cert.details["forms"]], [64, 128])
        self.assertEqual(len(cert.trend), 2)
        finest = cert.details["forms"][-1]
        for form in ("sign", "perimeter"):
            self.assertLessEqual(abs(finest[form] - finest["defining"]), cert.tolerance)


if __name__ == '__main__':
    unittest.main()
