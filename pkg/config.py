"""
Configuration settings for the nlcalib workbench.
"""

import os
from typing import Optional, Tuple

from dotenv import load_dotenv

load_dotenv()

# Output directory for reports - the only setting read from the environment
OUTPUT_DIR: str = os.environ.get("NLCALIB_OUTPUT_DIR", default="reports")

# Version of the JSON report layout
SCHEMA_VERSION: int = 1

# Normalization of c_{n,s}: "standard" (Fourier symbol |xi|^{2s}) or "unit"
NORMALIZATION: str = "standard"

# Structural checks
SYMMETRY_TOL: float = 1e-12
ELLIPTICITY_TOL: float = 1e-12
CONVEXITY_TOL: float = 1e-10
PARTIALS_RTOL: float = 1e-6
STRUCTURE_SAMPLES: int = 1000
SIGN_SMOOTHING: float = 1e-9  # delta of the smoothed sign for the TV family

# Quadrature
EXTERIOR_FACTOR: float = 8.0  # R_ext = EXTERIOR_FACTOR * diam(Omega)
EXTERIOR_CELLS: int = 48  # graded exterior cells per side and axis
TAIL_NODES: int = 16
T_NODES: int = 10
PAIR_CHUNK: int = 256  # rows of x points per pair block
RADIAL_NODES: int = 10
RADIAL_ANGLES: int = 48
RADIAL_FLOOR: float = 1e-5  # smallest radius resolved, relative to diam
EPSILON_SCHEDULE: Tuple[float, ...] = (0.1, 0.05, 0.025, 0.0125)
DEFAULT_WORKERS: int = 1

# Root finding
ROOT_TOL: float = 1e-10
BISECTION_MAX_ITER: int = 200
FIELD_STRICTNESS: float = 1e-8

# Certificates
CALIBRATION_RTOL: float = 1e-10
IDENTITY_RTOL: float = 1e-12
SPREAD_RTOL: float = 1e-3
SPREAD_FLOOR: float = 1e-9  # spreads below this are round-off and never count as growth
SPREAD_REFINED_FACTOR: float = 0.4  # bound on the refined spread, relative to SPREAD_RTOL
COAREA_RTOL: float = 1e-2
COMPARISON_TOL: float = 1e-10
VISCOSITY_TOL: float = 1e-6

# Viscosity probes
PROBE_GRADIENTS: int = 11
PROBE_OPENINGS: Tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0)

# Layer solver
LAYER_HALF_WIDTH: float = 20.0
LAYER_NODES: int = 801
LAYER_DAMPING: float = 0.02
LAYER_MAX_ITER: int = 20000
LAYER_RESIDUAL: float = 1e-3

# Competitor generation
DEFAULT_COMPETITORS: int = 20
DEFAULT_SEED: Optional[int] = None

# Paths
EXPERIMENTS_DIR_PATH: str = "experiments"
