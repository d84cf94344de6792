"""
Report management for certifier runs.

This module handles everything a run writes or reads back:
- JSON reports, one per certifier, versioned with a schema_version field
- CSV matrices (node values of the experiment's functions)
- Loading reports and consolidating them into one pandas table

JSON is written with sorted keys and without timestamps so that identical
configurations and seeds give byte-identical files.
"""

import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

import config
from core.experiment import CertifierResult, ExperimentConfig
from utils.file_utils import atomic_write_text, get_file_extension, is_regular_file_under, output_path

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["experiment", "certifier", "property", "verdict", "expected", "margin", "tolerance", "trend"]
VERDICT_ORDER = {"fail": 0, "inconclusive": 1, "pass": 2}


def report_payload(cfg: ExperimentConfig, result: CertifierResult) -> Dict[str, Any]:
    """The JSON document of one certifier run."""
    return {
        "schema_version": config.SCHEMA_VERSION,
        "experiment": cfg.name,
        "certifier": result.entry.name,
        "check": result.entry.check,
        "expected": result.entry.expect,
        "matched": result.matched,
        "seed": cfg.seed,
        "refine": cfg.refine,
        "params": result.entry.params,
        "certificate": result.certificate.to_dict(),
    }


def dumps(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(cfg: ExperimentConfig, result: CertifierResult, out: Optional[str] = None) -> str:
    """Write one JSON report atomically and return its path."""
    path = output_path(out, cfg.name, result.entry.name, "json")
    return atomic_write_text(path, dumps(report_payload(cfg, result)))


def write_matrix(csv_text: str, experiment: str, name: str, out: Optional[str] = None) -> str:
    """Write one CSV matrix (header row, node index and coordinate columns)."""
    return atomic_write_text(output_path(out, experiment, name, "csv"), csv_text)


def load_report(path: str) -> Dict[str, Any]:
    """
    Load one JSON report.

    Raises:
        FileNotFoundError: If the report doesn't exist
        ValueError: If the file is not a report of a known schema version
    """
    if get_file_extension(path) != "json":
        raise ValueError(f"Not a JSON report: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"Report not found: {path}")
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON in {path}: {str(e)}")
    version = payload.get("schema_version")
    if version != config.SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema_version {version}")
    return payload


def _row(payload: Dict[str, Any]) -> Dict[str, Any]:
    cert = payload["certificate"]
    trend = cert.get("trend") or []
    return {
        "experiment": payload.get("experiment"),
        "certifier": payload.get("certifier"),
        "property": cert.get("property"),
        "verdict": cert.get("verdict"),
        "expected": payload.get("expected"),
        "margin": cert.get("margin"),
        "tolerance": cert.get("tolerance"),
        "trend": " ".join(f"{v:.3e}" if isinstance(v, float) else str(v) for v in trend),
    }


def consolidate(paths: Sequence[str]) -> pd.DataFrame:
    """
    One row per report, failing rows first.

    Args:
        paths: JSON report paths.

    Returns:
        DataFrame with the columns of ``SUMMARY_COLUMNS``.

    Raises:
        ValueError: If no paths are given.
    """
    if not paths:
        raise ValueError("At least one report path is required")
    rows = [_row(load_report(p)) for p in paths]
    frame = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    frame["_order"] = frame["verdict"].map(VERDICT_ORDER).fillna(len(VERDICT_ORDER))
    frame = frame.sort_values("_order", kind="stable").drop(columns="_order").reset_index(drop=True)
    logger.info(f"Consolidated {len(frame)} reports, {int((frame['verdict'] == 'fail').sum())} failing")
    return frame


def format_summary(frame: pd.DataFrame) -> str:
    """Fixed-width table of property, verdict, margin and trend."""
    view = frame[["experiment", "property", "verdict", "margin", "trend"]]
    return view.to_string(index=False, float_format=lambda v: f"{v: .4e}")


def write_consolidated(frame: pd.DataFrame, path: str) -> str:
    return atomic_write_text(path, frame.to_csv(index=False, float_format="%.17g"))


def find_reports(directory: str) -> List[str]:
    """All JSON reports under a directory, in sorted order; links are skipped."""
    found = []
    for root, _, files in os.walk(directory):
        paths = (os.path.join(root, f) for f in files if get_file_extension(f) == "json")
        found.extend(p for p in paths if is_regular_file_under(p, directory))
    return sorted(found)
