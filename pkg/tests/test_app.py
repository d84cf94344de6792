"""
Tests for the command-line entry point and its exit codes.
"""

import glob
import json
import os
import shutil
import sys
import tempfile
import unittest

import pytest
import yaml

# Add parent directory to path to import the application
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../')))

from app import EXIT_CONFIG, EXIT_MISMATCH, EXIT_OK, build_parser, main
from core.mesh import set_workers

EXPERIMENTS = sorted(glob.glob(os.path.join(os.path.dirname(__file__), "../experiments", "*.yaml")))

CONFIG = {
    "name": "cli-demo",
    "seed": 4,
    "domain": {"lower": [0.0], "upper": [1.0], "cells": [4]},
    "lagrangian": {"id": "custom-table", "params": {"preset": "convex-nonelliptic"}},
    "field": {"kind": "affine", "t_range": [-1.0, 1.0]},
    "functions": {"ramp": {"kind": "affine"}},
    "certifiers": [
        {"check": "convexity", "params": {"samples": 50}},
        {"check": "ellipticity", "expect": "fail", "params": {"samples": 50}},
    ],
}


class TestApp(unittest.TestCase):
    """Subcommands and exit codes."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.out = os.path.join(self.test_dir, "reports")

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)
        set_workers(1)

    def _write_config(self, raw, name="demo.yaml"):
        path = os.path.join(self.test_dir, name)
        with open(path, "w") as f:
            yaml.safe_dump(raw, f)
        return path

    def test_parser_requires_config(self):
        with self.assertRaises(SystemExit):
            build_parser().parse_args(["run"])

    def test_missing_config_file(self):
        code = main(["run", "--config", os.path.join(self.test_dir, "absent.yaml"), "--out", self.out])
        self.assertEqual(code, EXIT_CONFIG)

    def test_invalid_config(self):
        raw = dict(CONFIG, certifiers=[{"check": "magic"}])
        code = main(["run", "--config", self._write_config(raw), "--out", self.out])
        self.assertEqual(code, EXIT_CONFIG)

    def test_run_writes_reports(self):
        code = main(["run", "--config", self._write_config(CONFIG), "--out", self.out])
        self.assertEqual(code, EXIT_OK)
        folder = os.path.join(self.out, "cli-demo")
        self.assertTrue(os.path.isfile(os.path.join(folder, "convexity.json")))
        self.assertTrue(os.path.isfile(os.path.join(folder, "ellipticity.json")))
        self.assertTrue(os.path.isfile(os.path.join(folder, "function-ramp.csv")))
        with open(os.path.join(folder, "ellipticity.json")) as f:
            payload = json.load(f)
        self.assertEqual(payload["certificate"]["verdict"], "fail")
        self.assertTrue(payload["matched"])

    def test_run_reports_mismatch(self):
        raw = dict(CONFIG, certifiers=[{"check": "ellipticity", "params": {"samples": 50}}])
        code = main(["run", "--config", self._write_config(raw), "--out", self.out])
        self.assertEqual(code, EXIT_MISMATCH)

    def test_report_consolidates(self):
        main(["run", "--config", self._write_config(CONFIG), "--out", self.out])
        folder = os.path.join(self.out, "cli-demo")
        reports = [os.path.join(folder, "convexity.json"), os.path.join(folder, "ellipticity.json")]
        target = os.path.join(self.test_dir, "summary.csv")
        code = main(["report", *reports, "--csv", target])
        self.assertEqual(code, EXIT_OK)
        with open(target) as f:
            lines = f.read().splitlines()
        self.assertEqual(len(lines), 3)
        self.assertIn("fail", lines[1])

    def test_energy_and_el_apply(self):
        path = self._write_config(CONFIG)
        self.assertEqual(main(["energy", "--config", path, "--function", "ramp", "--out", self.out]), EXIT_OK)
        self.assertEqual(main(["el-apply", "--config", path, "--x", "0.3", "--out", self.out]), EXIT_OK)
        self.assertTrue(os.path.isfile(os.path.join(self.out, "cli-demo", "euler-lagrange-anchor.csv")))

    def test_reports_do_not_depend_on_threads(self):
        raw = {
            "name": "threads-demo",
            "seed": 7,
            "domain": {"lower": [0.0], "upper": [1.0], "cells": [8]},
            "lagrangian": {"id": "fractional-quadratic", "params": {"s": 0.5}},
            "field": {"kind": "affine", "t_range": [-1.0, 1.0]},
            "competitors": {"recipe": "bump", "count": 2, "amplitude": 0.1},
            "certifiers": [{"check": "calibration"}, {"check": "minimality"}],
        }
        path = self._write_config(raw)
        reports = {}
        for threads in ("1", "4"):
            out = os.path.join(self.test_dir, f"threads-{threads}")
            self.assertEqual(main(["run", "--config", path, "--out", out, "--threads", threads]), EXIT_OK)
            folder = os.path.join(out, "threads-demo")
            reports[threads] = {}
            for name in sorted(os.listdir(folder)):
                if name.endswith(".json"):
                    with open(os.path.join(folder, name), "rb") as f:
                        reports[threads][name] = f.read()
        self.assertEqual(sorted(reports["1"]), ["calibration.json", "minimality.json"])
        self.assertEqual(reports["1"], reports["4"])


@pytest.mark.slow
@pytest.mark.parametrize("path", EXPERIMENTS, ids=os.path.basename)
def test_shipped_experiment_matches_expectations(path, tmp_path):
    try:
        assert main(["run", "--config", path, "--out", str(tmp_path)]) == EXIT_OK
    finally:
        set_workers(1)


if __name__ == '__main__':
    unittest.main()
