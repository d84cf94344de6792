"""
Unit tests for the lagrangian module.

These tests build specs from the catalog and run the structural checks on
families whose verdicts are known in closed form.
"""

import math
import os
import sys
import unittest

import numpy as np
import pytest

# Add parent directory to path to import core modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from core.certificate import Verdict
from core.errors import InvalidParameterError, KernelParityError, NotApplicableError
from core.lagrangian import (
    check_convexity,
    check_ellipticity,
    check_pairwise_symmetry,
    check_partials,
    make_kernel,
    make_lagrangian,
    make_local,
    make_reaction,
)
from core.mesh import Domain

ELLIPTIC_FAMILIES = [
    ("subgraph-perimeter", {"s": 0.5}),
    ("peridynamic-difference", {"kappa": 1.0, "horizon": 0.5}),
    ("convolution-reaction", {"kernel": {"kind": "gaussian", "width": 0.2}, "reaction": "quadratic"}),
    ("fractional-p-dirichlet-with-reaction", {"s": 0.4, "p": 2.0, "reaction": "sine-layer"}),
    ("fractional-p-dirichlet-with-reaction", {"s": 0.4, "p": 1.5, "reaction": "sine-layer"}),
    ("fractional-quadratic", {"s": 0.75}),
    ("nonlocal-total-variation", {"kernel": {"kind": "truncated", "radius": 0.25}}),
]


@pytest.mark.parametrize("family,params", ELLIPTIC_FAMILIES)
def test_elliptic_families_pass_ellipticity(family, params):
    cert = check_ellipticity(make_lagrangian(family, params), 500)
    assert cert.verdict == Verdict.PASS
    assert cert.margin >= -cert.tolerance
    assert cert.counterexample is None


class TestCatalog(unittest.TestCase):
    """Construction of specs and kernels."""

    def test_fractional_quadratic_defaults(self):
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5})
        self.assertEqual(spec.id, "fractional-quadratic")
        self.assertEqual(spec.n, 1)
        self.assertAlmostEqual(spec.params["c"], 1.0 / math.pi, places=12)
        self.assertEqual(spec.decay, 1.0)
        self.assertFalse(spec.has_reaction)
        self.assertEqual(spec.kernel.kind, "fractional")

    def test_pair_value(self):
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5, "c": 1.0})
        value = spec.g([[0.0]], [[2.0]], np.array([3.0]), np.array([1.0]))
        # c |a - b|^2 / 4 * |x - y|^(-2)
        self.assertAlmostEqual(float(value[0]), 0.25, places=14)

    def test_reaction_only_inside_omega(self):
        domain = Domain.box([0.0], [1.0], [4])
        spec = make_lagrangian("fractional-p-dirichlet-with-reaction",
                               {"s": 0.5, "reaction": "quadratic"})
        self.assertTrue(spec.has_reaction)
        inside = spec.g([[0.2]], [[0.7]], np.array([1.0]), np.array([1.0]), domain)
        outside = spec.g([[0.2]], [[3.0]], np.array([1.0]), np.array([1.0]), domain)
        self.assertAlmostEqual(float(inside[0]), -0.5 * 2.0 * 0.5, places=14)
        self.assertEqual(float(outside[0]), 0.0)

    def test_restricted_family_needs_domain(self):
        spec = make_lagrangian("peridynamic-difference", {"horizon": 0.3})
        with self.assertRaises(InvalidParameterError):
            spec.g([[0.0]], [[0.1]], np.array([1.0]), np.array([0.0]))

    def test_invalid_parameters(self):
        with self.assertRaises(InvalidParameterError):
            make_lagrangian("fractional-quadratic", {"s": 1.5})
        with self.assertRaises(InvalidParameterError):
            make_lagrangian("fractional-quadratic", {"s": 0.5, "n": 3})
        with self.assertRaises(InvalidParameterError):
            make_lagrangian("no-such-family", {})
        with self.assertRaises(InvalidParameterError):
            make_lagrangian("custom-table", {"preset": "no-such-preset"})

    def test_odd_kernel_rejected_by_convolution_family(self):
        odd = make_kernel("custom", 1, func=lambda z: z[:, 0])
        self.assertFalse(odd.even)
        with self.assertRaises(KernelParityError):
            make_lagrangian("convolution-reaction", {"kernel": odd})

    def test_kernels(self):
        truncated = make_kernel("truncated", 1, radius=0.5)
        self.assertEqual(truncated(np.array([[0.2], [0.7]])).tolist(), [1.0, 0.0])
        self.assertEqual(truncated.support, 0.5)
        gaussian = make_kernel("gaussian", 2, width=1.0)
        self.assertAlmostEqual(float(gaussian(np.array([[1.0, 0.0]]))[0]), math.exp(-1.0))
        with self.assertRaises(InvalidParameterError):
            make_kernel("fractional", 1)
        with self.assertRaises(InvalidParameterError):
            make_kernel("truncated", 1, radius=-1.0)

    def test_sine_layer_reaction_derivatives(self):
        reaction = make_reaction("sine-layer")
        a = np.linspace(-1.0, 1.0, 11)
        h = 1e-6
        fd = (reaction.F(a + h, None) - reaction.F(a - h, None)) / (2.0 * h)
        np.testing.assert_allclose(fd, reaction.dF(a, None), atol=1e-8)
        fd2 = (reaction.dF(a + h, None) - reaction.dF(a - h, None)) / (2.0 * h)
        np.testing.assert_allclose(fd2, reaction.d2F(a, None), atol=1e-8)

    def test_local_lagrangians(self):
        local = make_local("dirichlet")
        q = np.array([[3.0, 4.0]])
        self.assertAlmostEqual(float(local.G(None, np.zeros(1), q)[0]), 12.5)
        with self.assertRaises(InvalidParameterError):
            make_local("semilinear")


class TestStructuralChecks(unittest.TestCase):
    """Verdicts of the structural certificates."""

    def test_fractional_quadratic_passes_all_checks(self):
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5})
        for check in (check_pairwise_symmetry, check_partials, check_ellipticity, check_convexity):
            cert = check(spec, 200)
            self.assertEqual(cert.verdict, Verdict.PASS, cert.property_id)

    def test_convex_nonelliptic_preset(self):
        spec = make_lagrangian("custom-table", {"preset": "convex-nonelliptic"})
        self.assertEqual(check_convexity(spec, 200).verdict, Verdict.PASS)
        ellipticity = check_ellipticity(spec, 200)
        self.assertEqual(ellipticity.verdict, Verdict.FAIL)
        self.assertIn("a", ellipticity.counterexample)
        self.assertLess(ellipticity.margin, 0.0)

    def test_asymmetric_preset_fails_symmetry(self):
        spec = make_lagrangian("custom-table", {"preset": "asymmetric-example"})
        cert = check_pairwise_symmetry(spec, 100)
        self.assertEqual(cert.verdict, Verdict.FAIL)
        self.assertIn("x", cert.counterexample)

    def test_symmetrized_asymmetric_preset_passes(self):
        spec = make_lagrangian("custom-table", {"preset": "asymmetric-example", "symmetrize": True})
        self.assertEqual(check_pairwise_symmetry(spec, 100).verdict, Verdict.PASS)

    def test_total_variation_uses_monotone_substitute(self):
        spec = make_lagrangian("nonlocal-total-variation",
                               {"kernel": {"kind": "truncated", "radius": 0.5}})
        cert = check_ellipticity(spec, 100)
        self.assertEqual(cert.verdict, Verdict.PASS)
        self.assertEqual(cert.details["mode"], "monotone-partial")
        with self.assertRaises(NotApplicableError):
            check_convexity(spec, 100)

    def test_sample_count_must_be_positive(self):
        spec = make_lagrangian("fractional-quadratic", {"s": 0.5})
        with self.assertRaises(InvalidParameterError):
            check_pairwise_symmetry(spec, 0)


if __name__ == "__main__":
    unittest.main()
