"""Unit tests for the certificate module."""

import json
import os
import sys

import numpy as np
import pytest

# Add parent directory to path to import core modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from core.certificate import Certificate, Verdict, combine, verdict_of


def test_failing_certificate_needs_counterexample():
    with pytest.raises(ValueError):
        Certificate("ellipticity", Verdict.FAIL, -1.0, 0.0)


def test_passing_certificate_rejects_margin_below_tolerance():
    with pytest.raises(ValueError):
        Certificate("calibration", Verdict.PASS, -1e-3, 1e-6)


def test_passing_certificate_accepts_margin_within_tolerance():
    cert = Certificate("calibration", Verdict.PASS, -1e-7, 1e-6)
    assert cert.passed
    assert not cert.failed


def test_to_dict_is_json_safe():
    cert = Certificate(
        "field", Verdict.FAIL, np.float64(-2.0), 0.0,
        counterexample={"x": np.array([0.5]), "gap": float("inf"), "ok": np.bool_(False)},
        details={"count": np.int64(3), "value": float("nan")},
    )
    payload = cert.to_dict()
    text = json.dumps(payload, allow_nan=False)
    assert json.loads(text)["counterexample"] == {"x": [0.5], "gap": "inf", "ok": False}
    assert payload["details"] == {"count": 3, "value": "nan"}
    assert payload["verdict"] == "fail"


def test_with_trend_converts_to_floats():
    cert = Certificate("coarea", Verdict.PASS, 0.1, 0.01).with_trend(np.array([3, 2, 1]))
    assert cert.trend == [3.0, 2.0, 1.0]
    assert all(isinstance(v, float) for v in cert.trend)


def test_verdict_of():
    assert verdict_of(True) is Verdict.PASS
    assert verdict_of(False) is Verdict.FAIL


def test_combine_uses_minimum_margin_and_maximum_tolerance():
    parts = [
        Certificate("a", Verdict.PASS, 0.5, 1e-6),
        Certificate("b", Verdict.PASS, 0.1, 1e-3),
    ]
    merged = combine("both", parts)
    assert merged.passed
    assert merged.margin == 0.1
    assert merged.tolerance == 1e-3
    assert merged.details["parts"] == {"a": "pass", "b": "pass"}


def test_combine_reports_first_failing_clause():
    parts = [
        Certificate("a", Verdict.PASS, 0.5, 0.0),
        Certificate("b", Verdict.FAIL, -2.0, 0.0, counterexample={"x": [1.0]}),
        Certificate("c", Verdict.FAIL, -3.0, 0.0, counterexample={"x": [2.0]}),
    ]
    merged = combine("all", parts)
    assert merged.failed
    assert merged.margin == -3.0
    assert merged.counterexample == {"x": [1.0], "clause": "b"}


def test_combine_inconclusive_without_failures():
    parts = [
        Certificate("a", Verdict.PASS, 0.5, 0.0),
        Certificate("b", Verdict.INCONCLUSIVE, -1.0, 0.0),
    ]
    assert combine("all", parts).verdict is Verdict.INCONCLUSIVE


def test_combine_empty_raises():
    with pytest.raises(ValueError):
        combine("nothing", [])
