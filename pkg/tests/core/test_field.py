"""
Unit tests for the field module.

This test suite verifies discrete functions and their exterior rules, the
field factories, leaf-parameter inversion and the sliding weak field.
"""

import math
import os
import sys
import unittest

import numpy as np

# Add parent directory to path to import core modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from core.certificate import Verdict
from core.errors import (
    InvalidParameterError,
    NotMonotoneError,
    NoTouchError,
    OutOfRegionError,
    TooLargeTError,
)
from core.field import (
    DiscreteFunction,
    ExteriorRule,
    affine_field,
    check_field,
    check_weak_field,
    leaf_parameter,
    shift_field,
    sliding_weak_field,
    translation_field,
)
from core.mesh import Domain


class TestDiscreteFunction(unittest.TestCase):
    """Node values, exterior rules and CSV output."""

    def setUp(self):
        self.domain = Domain.box([0.0], [1.0], [4])

    def test_node_count_is_checked(self):
        with self.assertRaises(InvalidParameterError):
            DiscreteFunction(self.domain, np.zeros(3), ExteriorRule("constant"))

    def test_nonfinite_values_rejected(self):
        values = np.zeros(5)
        values[2] = np.nan
        with self.assertRaises(InvalidParameterError):
            DiscreteFunction(self.domain, values, ExteriorRule("constant"))

    def test_exterior_rule_needs_function(self):
        with self.assertRaises(InvalidParameterError):
            ExteriorRule("callable")
        with self.assertRaises(InvalidParameterError):
            ExteriorRule("periodic")

    def test_interpolation_and_constant_exterior(self):
        w = DiscreteFunction(self.domain, np.array([0.0, 1.0, 2.0, 3.0, 4.0]),
                             ExteriorRule("constant", value=-1.0))
        np.testing.assert_allclose(w([[0.125], [0.5], [2.0]]), [0.5, 2.0, -1.0])

    def test_clamped_extension(self):
        w = DiscreteFunction.clamped(self.domain, lambda p: 2.0 * p[:, 0])
        np.testing.assert_allclose(w([[-3.0], [0.25], [5.0]]), [0.0, 0.5, 2.0])
        self.assertEqual(w.kinks, (0.0, 1.0))
        self.assertFalse(w.smooth_at(1.0))
        self.assertTrue(w.smooth_at(0.5))

    def test_with_formula_keeps_exterior(self):
        w = DiscreteFunction(self.domain, np.zeros(5), ExteriorRule("constant", value=7.0))
        v = w.with_formula(lambda p: p[:, 0] ** 2)
        np.testing.assert_allclose(v.values, [0.0, 0.0625, 0.25, 0.5625, 1.0])
        self.assertEqual(float(v([[2.0]])[0]), 7.0)

    def test_to_csv(self):
        w = DiscreteFunction.from_callable(self.domain, lambda p: p[:, 0])
        lines = w.to_csv().strip().splitlines()
        self.assertEqual(lines[0], "node,x,value")
        self.assertEqual(len(lines), 6)
        self.assertEqual(lines[3], "2,0.5,0.5")


class TestFields(unittest.TestCase):
    """Field factories and leaf parameters."""

    def setUp(self):
        self.domain = Domain.box([0.0], [1.0], [8])

    def test_affine_field_is_certified(self):
        fld = affine_field(1, (-1.0, 1.0))
        cert = check_field(fld, self.domain, samples=100)
        self.assertEqual(cert.verdict, Verdict.PASS)
        self.assertEqual(cert.details["field"]["name"], "affine")

    def test_affine_slope_dimension(self):
        with self.assertRaises(InvalidParameterError):
            affine_field(2, (-1.0, 1.0), slope=[1.0])

    def test_empty_parameter_interval(self):
        with self.assertRaises(InvalidParameterError):
            affine_field(1, (1.0, 1.0))

    def test_leaf_parameter(self):
        fld = affine_field(1, (-1.0, 1.0))
        t = leaf_parameter(fld, [[0.3], [0.6]], [0.5, 0.6])
        np.testing.assert_allclose(t, [0.2, 0.0], atol=1e-12)

    def test_leaf_parameter_outside_region(self):
        fld = affine_field(1, (-1.0, 1.0))
        with self.assertRaises(OutOfRegionError) as ctx:
            leaf_parameter(fld, [[0.3]], [5.0])
        self.assertEqual(ctx.exception.value, 5.0)
        clamped = leaf_parameter(fld, [[0.3]], [5.0], clamp=True)
        self.assertEqual(float(clamped[0]), 1.0)

    def test_translation_field(self):
        fld = translation_field(lambda p: np.arctan(p[:, 0]), 0, (-1.0, 1.0), n=1)
        np.testing.assert_allclose(fld.leaf(0.5, [[0.25]]), [math.atan(0.75)])
        np.testing.assert_allclose(fld.dt(0.0, [[1.0]]), [0.5], rtol=1e-6)
        self.assertEqual(check_field(fld, self.domain, samples=50).verdict, Verdict.PASS)

    def test_translation_of_decreasing_function(self):
        with self.assertRaises(NotMonotoneError):
            translation_field(lambda p: -p[:, 0], 0, (-1.0, 1.0), n=1)

    def test_shift_field(self):
        fld = shift_field(lambda p: p[:, 0] ** 2, lambda p: np.ones(p.shape[0]), (-2.0, 2.0), 1)
        np.testing.assert_allclose(fld.leaf(1.5, [[2.0]]), [5.5])
        t = leaf_parameter(fld, [[2.0]], [3.0])
        self.assertAlmostEqual(float(t[0]), -1.0, places=10)

    def test_leaf_function(self):
        fld = affine_field(1, (-1.0, 1.0))
        u = fld.leaf_function(0.25, self.domain)
        self.assertTrue(u.affine_tail)
        np.testing.assert_allclose(u([[0.5], [3.0]]), [0.75, 3.25])


class TestSlidingWeakField(unittest.TestCase):
    """max(u, phi + t) around a touching point of u = x^2 and phi = -x^2."""

    def setUp(self):
        self.domain = Domain.box([-1.0], [1.0], [16])
        self.u = DiscreteFunction.from_callable(self.domain, lambda p: p[:, 0] ** 2, growth=2.0)
        self.phi = lambda p: -p[:, 0] ** 2

    def test_weak_field_is_certified(self):
        wf = sliding_weak_field(self.u, self.phi, [0.0], 0.5, 0.3, 0.1, -2.0)
        self.assertEqual(wf.C0, 2.0)
        self.assertAlmostEqual(wf.active_measure(0.1), 2.0 * math.sqrt(0.05), places=8)
        self.assertEqual(wf.active_measure(0.0), 0.0)
        self.assertEqual(check_weak_field(wf).verdict, Verdict.PASS)

    def test_leaves_move_only_near_touching_point(self):
        wf = sliding_weak_field(self.u, self.phi, [0.0], 0.5, 0.3, 0.1, -2.0)
        np.testing.assert_allclose(wf.leaf(0.1, [[0.0], [0.4], [2.0]]), [0.1, 0.16, 4.0])
        np.testing.assert_allclose(wf.dt(0.1, [[0.0], [0.4]]), [1.0, 0.0])

    def test_height_is_bounded(self):
        with self.assertRaises(TooLargeTError):
            sliding_weak_field(self.u, self.phi, [0.0], 0.5, 0.3, 0.5, -2.0)

    def test_phi_must_touch(self):
        with self.assertRaises(NoTouchError):
            sliding_weak_field(self.u, lambda p: 1.0 - p[:, 0] ** 2, [0.0], 0.5, 0.3, 0.1, -2.0)

    def test_neighborhood_inside_omega(self):
        with self.assertRaises(InvalidParameterError):
            sliding_weak_field(self.u, self.phi, [0.8], 0.5, 0.3, 0.1, -2.0)


if __name__ == "__main__":
    unittest.main()
