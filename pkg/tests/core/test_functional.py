"""
Unit tests for the functional module.

The Lagrangian (a + b)^2 restricted to Omega x Omega has polynomial
integrands, so energies and calibrations on affine data are exact under
the Gauss rules and can be compared with closed forms.
"""

import os
import sys
import unittest

import numpy as np

# Add parent directory to path to import core modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from core.certificate import Verdict
from core.errors import InvalidParameterError, OutOfRegionError
from core.field import DiscreteFunction, affine_field
from core.functional import (
    blend_competitor,
    calibration_defining,
    energy_fractional_semilinear,
    energy_local,
    energy_mixed,
    energy_nonlocal,
    euler_lagrange,
    euler_lagrange_frame,
    first_variation_check,
    fractional_semilinear_spec,
)
from core.lagrangian import make_lagrangian, make_local, make_reaction
from core.mesh import Domain


def _ramp(domain, offset=0.0):
    return DiscreteFunction.from_callable(domain, lambda p: p[:, 0] + offset,
                                          growth=1.0, affine_tail=True)


class TestEnergies(unittest.TestCase):
    """Energies in the half convention and the c/4 convention."""

    def setUp(self):
        self.domain = Domain.box([0.0], [1.0], [4])
        self.spec = make_lagrangian("custom-table", {"preset": "convex-nonelliptic"})

    def test_restricted_energy_is_exact(self):
        report = energy_nonlocal(self.spec, self.domain, _ramp(self.domain))
        # 1/2 of the integral of (x + y)^2 over the unit square
        self.assertAlmostEqual(report.value, 7.0 / 12.0, places=12)
        self.assertEqual(report.breakdown["cross"], 0.0)
        self.assertEqual(report.breakdown["tail"], 0.0)
        self.assertEqual(report.convention, "half")
        self.assertFalse(report.rule["exterior"])

    def test_error_estimate_vanishes_for_polynomials(self):
        report = energy_nonlocal(self.spec, self.domain, _ramp(self.domain), estimate_error=True)
        self.assertLess(report.error_estimate, 1e-12)

    def test_constant_function_has_only_reaction_energy(self):
        w = DiscreteFunction.from_callable(self.domain, lambda p: np.ones(p.shape[0]))
        reaction = make_reaction("quadratic")
        half = energy_nonlocal(fractional_semilinear_spec(0.5, reaction), self.domain, w)
        self.assertAlmostEqual(half.value, -0.25, places=12)
        full = energy_fractional_semilinear(0.5, reaction, self.domain, w)
        self.assertEqual(full.convention, "c/4")
        self.assertAlmostEqual(full.value, 2.0 * half.value, places=12)

    def test_local_energy(self):
        report = energy_local(make_local("dirichlet"), self.domain, _ramp(self.domain))
        self.assertAlmostEqual(report.value, 0.5, places=12)

    def test_mixed_energy_adds_parts(self):
        w = _ramp(self.domain)
        mixed = energy_mixed(self.spec, self.domain, w, local=make_local("dirichlet"))
        self.assertAlmostEqual(mixed.value, 7.0 / 12.0 + 0.5, places=12)
        self.assertAlmostEqual(mixed.breakdown["local"], 0.5, places=12)
        with self.assertRaises(InvalidParameterError):
            energy_mixed(None, self.domain, w)

    def test_report_serializes(self):
        payload = energy_nonlocal(self.spec, self.domain, _ramp(self.domain)).to_dict()
        self.assertEqual(sorted(payload["breakdown"]), ["cross", "interior", "reaction", "tail"])
        self.assertEqual(payload["grid"]["cells"], [4])


class TestOperators(unittest.TestCase):
    """Euler-Lagrange operator and the first variation."""

    def setUp(self):
        self.domain = Domain.box([0.0], [1.0], [4])
        self.spec = make_lagrangian("custom-table", {"preset": "convex-nonelliptic"})

    def test_euler_lagrange_closed_form(self):
        # int_0^1 2 (x + y) dy = 2x + 1
        value = euler_lagrange(self.spec, self.domain, _ramp(self.domain), 0.3)
        self.assertAlmostEqual(value, 1.6, places=6)

    def test_euler_lagrange_outside_omega(self):
        with self.assertRaises(InvalidParameterError):
            euler_lagrange(self.spec, self.domain, _ramp(self.domain), 2.0)

    def test_euler_lagrange_frame(self):
        frame = euler_lagrange_frame(self.spec, self.domain, _ramp(self.domain))
        self.assertEqual(list(frame.columns), ["point", "x", "L"])
        self.assertEqual(len(frame), 4)
        np.testing.assert_allclose(frame["L"], 2.0 * frame["x"] + 1.0, atol=1e-6)

    def test_first_variation_matches_operator(self):
        cert = first_variation_check(self.spec, self.domain, _ramp(self.domain),
                                     lambda p: p[:, 0] * (1.0 - p[:, 0]))
        self.assertEqual(cert.verdict, Verdict.PASS)


class TestCalibration(unittest.TestCase):
    """The calibrating functional of the affine field."""

    def setUp(self):
        self.domain = Domain.box([0.0], [1.0], [4])
        self.spec = make_lagrangian("custom-table", {"preset": "convex-nonelliptic"})
        self.field = affine_field(1, (-1.0, 1.0))

    def test_anchor_leaf_returns_its_energy(self):
        anchor = self.field.leaf_function(0.0, self.domain)
        report = calibration_defining(self.spec, self.field, 0.0, self.domain, anchor)
        energy = energy_nonlocal(self.spec, self.domain, anchor)
        self.assertEqual(report.value, energy.value)
        self.assertEqual(report.breakdown["inner_pair"], 0.0)
        self.assertEqual(report.inner["moved_points"], 0)

    def test_calibration_equals_energy_on_other_leaves(self):
        leaf = self.field.leaf_function(0.5, self.domain)
        for inner in ("t", "lambda"):
            report = calibration_defining(self.spec, self.field, 0.0, self.domain, leaf, inner=inner)
            # 1/2 of the integral of (x + y + 1)^2 over the unit square
            self.assertAlmostEqual(report.value, 25.0 / 12.0, places=10)
        self.assertEqual(report.path, "lambda")

    def test_graph_outside_the_field(self):
        w = _ramp(self.domain, offset=5.0)
        with self.assertRaises(OutOfRegionError):
            calibration_defining(self.spec, self.field, 0.0, self.domain, w)

    def test_invalid_arguments(self):
        anchor = self.field.leaf_function(0.0, self.domain)
        with self.assertRaises(InvalidParameterError):
            calibration_defining(self.spec, self.field, 3.0, self.domain, anchor)
        with self.assertRaises(InvalidParameterError):
            calibration_defining(self.spec, self.field, 0.0, self.domain, anchor, inner="x")

    def test_blend_competitor(self):
        anchor = self.field.leaf_function(0.0, self.domain)
        w = _ramp(self.domain, offset=0.4)
        np.testing.assert_allclose(blend_competitor(w, anchor, 0.25)([[0.5]]), [0.8])
        with self.assertRaises(InvalidParameterError):
            blend_competitor(w, anchor, 1.5)


if __name__ == "__main__":
    unittest.main()
