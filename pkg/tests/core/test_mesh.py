"""
Unit tests for the mesh module.

Covers domain geometry, quadrature rules, pair quadrature over Q(Omega)
(exact cases for polynomial integrands), worker-count independence and the
fractional Laplacian of closed forms.
"""

import math
import os
import sys
import unittest

import numpy as np

# Add parent directory to path to import core modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from core.errors import InsufficientSmoothnessError, InvalidParameterError
from core.field import DiscreteFunction
from core.mesh import (
    Domain,
    QuadratureRule,
    as_points,
    cell_rule,
    discretize,
    extrapolate_epsilon,
    fractional_constant,
    fractional_laplacian_pv,
    gauss_on,
    get_workers,
    integrate_Q,
    node_weights,
    refine,
    set_workers,
)


class TestDomain(unittest.TestCase):
    """Geometry of boxes and their refinement."""

    def test_box_geometry(self):
        domain = Domain.box([0.0, 0.0], [2.0, 1.0], [4, 2])
        self.assertEqual(domain.dim, 2)
        self.assertAlmostEqual(domain.measure, 2.0)
        self.assertAlmostEqual(domain.diam, math.sqrt(5.0))
        self.assertEqual(domain.node_points().shape, (15, 2))
        self.assertEqual(domain.cell_centers().shape, (8, 2))
        self.assertAlmostEqual(domain.r_ext, 8.0 * math.sqrt(5.0))

    def test_empty_box_raises(self):
        with self.assertRaises(InvalidParameterError):
            Domain.box([1.0], [0.0], [4])

    def test_three_dimensions_rejected(self):
        with self.assertRaises(InvalidParameterError):
            Domain.box([0.0] * 3, [1.0] * 3, [2] * 3)

    def test_small_exterior_rejected(self):
        with self.assertRaises(InvalidParameterError):
            Domain.box([0.0], [1.0], [4], r_ext=1.5)

    def test_refine(self):
        domain = Domain.box([0.0], [1.0], [8])
        self.assertEqual(refine(domain, 4).cells, (32,))
        with self.assertRaises(InvalidParameterError):
            refine(domain, 3)

    def test_contains_and_distance(self):
        domain = Domain.box([-1.0], [1.0], [4])
        inside = domain.contains([[-1.0], [0.0], [1.5]])
        self.assertEqual(inside.tolist(), [True, True, False])
        self.assertFalse(domain.contains([[-1.0]], closed=False)[0])
        self.assertAlmostEqual(domain.distance_to_boundary(0.25), 0.75)

    def test_exterior_edges_cover_exterior_box(self):
        domain = Domain.box([0.0], [1.0], [4])
        edges = domain.exterior_axis_edges(0)
        self.assertAlmostEqual(edges[0], 0.5 - domain.r_ext)
        self.assertAlmostEqual(edges[-1], 0.5 + domain.r_ext)
        self.assertTrue(np.all(np.diff(edges) > 0))

    def test_as_points(self):
        self.assertEqual(as_points(0.5, 1).shape, (1, 1))
        self.assertEqual(as_points([0.1, 0.2, 0.3], 1).shape, (3, 1))
        self.assertEqual(as_points([0.1, 0.2], 2).shape, (1, 2))
        with self.assertRaises(InvalidParameterError):
            as_points([0.1, 0.2, 0.3], 2)


class TestQuadratureRule(unittest.TestCase):
    """Validation of rule settings."""

    def test_unknown_interior_rule(self):
        with self.assertRaises(InvalidParameterError):
            QuadratureRule(interior="gauss7")

    def test_epsilon_truncation_needs_epsilon(self):
        with self.assertRaises(InvalidParameterError):
            QuadratureRule(diagonal="epsilon-truncation")

    def test_schedule_must_decrease(self):
        with self.assertRaises(InvalidParameterError):
            QuadratureRule(epsilon_schedule=(0.1, 0.2))

    def test_companion_rule(self):
        self.assertEqual(QuadratureRule(interior="gauss2").companion().interior, "gauss3")
        self.assertEqual(QuadratureRule(interior="midpoint").companion().interior, "gauss2")


class TestQuadrature(unittest.TestCase):
    """Exactness of the single and pair quadratures."""

    def setUp(self):
        self.domain = Domain.box([0.0], [1.0], [6])
        self.rule = QuadratureRule(exterior=False)

    def tearDown(self):
        set_workers(1)

    def test_gauss_on_is_exact_for_cubics(self):
        x, w = gauss_on(0.0, 2.0, 2)
        self.assertAlmostEqual(float(np.dot(w, x ** 3)), 4.0, places=12)

    def test_weights_add_up_to_measure(self):
        domain = Domain.box([0.0, 0.0], [2.0, 1.0], [3, 5])
        self.assertAlmostEqual(float(node_weights(domain).sum()), 2.0, places=12)
        _, w = cell_rule(domain, 3)
        self.assertAlmostEqual(float(w.sum()), 2.0, places=12)

    def test_discretization_without_exterior(self):
        disc = discretize(self.domain, self.rule)
        self.assertEqual(disc.interior_points.shape, (12, 1))
        self.assertEqual(disc.slices["exterior"].stop - disc.slices["exterior"].start, 0)
        self.assertAlmostEqual(float(disc.interior_weights.sum()), 1.0, places=12)

    def test_constant_over_omega_squared(self):
        parts = integrate_Q(self.domain, self.rule, lambda x, y: np.ones(x.shape[0]))
        self.assertAlmostEqual(parts.total, 1.0, places=12)
        self.assertEqual(parts.cross, 0.0)
        self.assertFalse(parts.tail_truncated)

    def test_polynomial_over_omega_squared(self):
        parts = integrate_Q(self.domain, self.rule, lambda x, y: (x[:, 0] - y[:, 0]) ** 2)
        self.assertAlmostEqual(parts.total, 1.0 / 6.0, places=12)

    def test_nonsymmetric_integrand(self):
        parts = integrate_Q(self.domain, self.rule, lambda x, y: x[:, 0] ** 2 * y[:, 0],
                            symmetric=False)
        self.assertAlmostEqual(parts.total, 1.0 / 6.0, places=12)

    def test_result_independent_of_worker_count(self):
        rule = QuadratureRule(exterior=False, chunk=3)
        f = lambda x, y: np.exp(-(x[:, 0] - y[:, 0]) ** 2)
        set_workers(1)
        single = integrate_Q(self.domain, rule, f).total
        set_workers(4)
        self.assertEqual(get_workers(), 4)
        threaded = integrate_Q(self.domain, rule, f).total
        self.assertEqual(single, threaded)

    def test_set_workers_rejects_zero(self):
        with self.assertRaises(InvalidParameterError):
            set_workers(0)

    def test_extrapolation_removes_power_law(self):
        eps = [0.1, 0.05]
        values = [3.0 + 2.0 * e ** 1.5 for e in eps]
        self.assertAlmostEqual(extrapolate_epsilon(eps, values, 1.5), 3.0, places=12)
        self.assertEqual(extrapolate_epsilon([0.1], [4.0], 1.0), 4.0)


class TestFractionalLaplacian(unittest.TestCase):
    """Normalization constant and the principal-value operator."""

    def test_fractional_constant(self):
        self.assertAlmostEqual(fractional_constant(1, 0.5), 1.0 / math.pi, places=12)
        self.assertEqual(fractional_constant(1, 0.3, mode="unit"), 1.0)
        with self.assertRaises(InvalidParameterError):
            fractional_constant(1, 1.0)

    def test_affine_function_is_harmonic(self):
        domain = Domain.box([-1.0], [1.0], [8])
        u = DiscreteFunction.from_callable(domain, lambda p: 2.0 * p[:, 0] + 1.0,
                                           growth=1.0, affine_tail=True)
        value = fractional_laplacian_pv(u, 0.3, 0.5)
        self.assertAlmostEqual(value, 0.0, places=7)

    def test_kink_is_rejected(self):
        domain = Domain.box([-1.0], [1.0], [8])
        u = DiscreteFunction.from_callable(domain, lambda p: np.abs(p[:, 0]),
                                           growth=1.0, kinks=(0.0,))
        with self.assertRaises(InsufficientSmoothnessError):
            fractional_laplacian_pv(u, 0.0, 0.75)


if __name__ == "__main__":
    unittest.main()
