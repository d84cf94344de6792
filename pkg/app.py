"""
nlcalib - certify calibrations and fields of extremals for nonlocal energies.

This is the main application entry point. Subcommands:
- run: execute the certifiers of an experiment configuration
- report: consolidate JSON reports into one table
- energy: evaluate the energy of one function of a configuration
- el-apply: apply the Euler-Lagrange operator to one function
- layer-solve: compute the 1D layer profile of a semilinear configuration

Exit codes: 0 when every certificate matches its declared verdict, 1 on a
mismatch, 2 for invalid configurations or missing files, 3 for any other
runtime failure.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np
import yaml

import config
from core.errors import ConfigInvalidError
from core.experiment import Experiment, load_config, parse_config, run_experiment
from core.functional import energy_mixed, euler_lagrange_frame
from core.mesh import set_workers
from core.report_manager import (
    consolidate,
    dumps,
    format_summary,
    write_consolidated,
    write_matrix,
    write_report,
)
from core.verify import layer_error, solve_layer_1d
from utils.file_utils import output_dir

logger = logging.getLogger("nlcalib")

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _experiment(args) -> Experiment:
    return Experiment(parse_config(load_config(args.config), args.seed, args.refine))


def cmd_run(args) -> int:
    cfg = parse_config(load_config(args.config), args.seed, args.refine)
    results = run_experiment(cfg)
    for result in results:
        path = write_report(cfg, result, args.out)
        print(f"{result.entry.name:<28} {result.certificate.verdict.value:<13} "
              f"expected {result.entry.expect:<13} -> {path}")
    for name, w in Experiment(cfg).functions.items():
        write_matrix(w.to_csv(), cfg.name, f"function-{name}", args.out)
    mismatched = [r.entry.name for r in results if not r.matched]
    if mismatched:
        logger.error(f"Certificates not matching their declared verdict: {', '.join(mismatched)}")
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_report(args) -> int:
    frame = consolidate(args.reports)
    print(format_summary(frame))
    target = args.csv or os.path.join(output_dir(args.out), "consolidated.csv")
    write_consolidated(frame, target)
    print(f"Consolidated table written to {target}")
    return EXIT_OK


def cmd_energy(args) -> int:
    exp = _experiment(args)
    w = exp.function(args.function)
    report = energy_mixed(exp.spec, exp.domain, w, exp.rule)
    print(dumps({"schema_version": config.SCHEMA_VERSION, "experiment": exp.cfg.name,
                 "function": args.function or "anchor", "energy": report.to_dict()}), end="")
    return EXIT_OK


def cmd_el_apply(args) -> int:
    exp = _experiment(args)
    w = exp.function(args.function)
    points = None
    if args.x:
        points = np.asarray(args.x, dtype=float).reshape(-1, exp.domain.dim)
    frame = euler_lagrange_frame(exp.spec, exp.domain, w, points)
    print(frame.to_string(index=False))
    path = write_matrix(frame.to_csv(index=False, float_format="%.17g"), exp.cfg.name,
                        f"euler-lagrange-{args.function or 'anchor'}", args.out)
    print(f"Written to {path}")
    return EXIT_OK


def cmd_layer_solve(args) -> int:
    exp = _experiment(args)
    w = solve_layer_1d(exp.spec, args.half_width, args.nodes, args.damping, guess=args.guess)
    err, shift = layer_error(w)
    path = write_matrix(w.to_csv(), exp.cfg.name, "layer-profile", args.out)
    print(json.dumps({"error": err, "shift": shift, "profile": path}, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: NLCALIB_OUTPUT_DIR or ./reports)")
    common.add_argument("--threads", type=int, default=config.DEFAULT_WORKERS, help="worker threads")
    common.add_argument("--verbose", action="store_true", help="log at DEBUG level")

    configured = argparse.ArgumentParser(add_help=False)
    configured.add_argument("--config", required=True, help="experiment YAML file")
    configured.add_argument("--refine", type=int, help="refinement levels (overrides the config)")
    configured.add_argument("--seed", type=int, help="random seed (overrides the config)")

    parser = argparse.ArgumentParser(prog="nlcalib", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common, configured], help="run an experiment")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("report", parents=[common], help="consolidate JSON reports")
    p.add_argument("reports", nargs="+", help="JSON report files")
    p.add_argument("--csv", help="path of the consolidated CSV")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("energy", parents=[common, configured], help="evaluate an energy")
    p.add_argument("--function", help="named function of the config (default: the anchor leaf)")
    p.set_defaults(handler=cmd_energy)

    p = sub.add_parser("el-apply", parents=[common, configured], help="apply the Euler-Lagrange operator")
    p.add_argument("--function", help="named function of the config (default: the anchor leaf)")
    p.add_argument("--x", type=float, nargs="*", help="evaluation points (default: cell centres)")
    p.set_defaults(handler=cmd_el_apply)

    p = sub.add_parser("layer-solve", parents=[common, configured], help="solve for the 1D layer")
    p.add_argument("--half-width", type=float, default=config.LAYER_HALF_WIDTH)
    p.add_argument("--nodes", type=int, default=config.LAYER_NODES)
    p.add_argument("--damping", type=float, default=config.LAYER_DAMPING)
    p.add_argument("--guess", choices=("odd", "even"), default="odd")
    p.set_defaults(handler=cmd_layer_solve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    set_workers(max(1, args.threads))
    try:
        return args.handler(args)
    except (ConfigInvalidError, FileNotFoundError, yaml.YAMLError) as e:
        logger.error(f"Error in configuration: {str(e)}")
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f"Error running {args.command}: {str(e)}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
