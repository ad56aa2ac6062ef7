import os
import logging
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

# ============================================================================
# ENVIRONMENT SETTINGS
# ============================================================================

# Logging level (GF_LOG=DEBUG for per-iteration telemetry)
LOG_LEVEL = os.getenv("GF_LOG", "INFO").upper()

# Default worker cap for parallel trials and probes
THREADS = int(os.getenv("GF_THREADS", "4"))

# Default seed for randomized suites
SEED = int(os.getenv("GF_SEED", "42"))

# Directory for JSON/CSV artifacts
OUTPUT_DIR = os.getenv("GF_OUTPUT_DIR", "results")

# ============================================================================
# TIME STEPPING
# ============================================================================

# Upper bound on dt * max(B + lambda) over grid nodes
STABILITY_CFL = float(os.getenv("GF_STABILITY_CFL", "0.5"))

# Longest reaction substep inside one split step
REACTION_MAX_SUBSTEP = float(os.getenv("GF_REACTION_MAX_SUBSTEP", "0.02"))

# Relative slack accepted when escaped mass is reported as negligible
ESCAPED_MASS_WARNING = float(os.getenv("GF_ESCAPED_MASS_WARNING", "1e-6"))

# ============================================================================
# EIGEN SOLVER SETTINGS
# ============================================================================

# Residual tolerance of the shifted inverse power iteration
DUAL_TOL = float(os.getenv("GF_DUAL_TOL", "1e-8"))

# Iteration cap of the shifted inverse power iteration
DUAL_MAX_ITER = int(os.getenv("GF_DUAL_MAX_ITER", "500"))

# Maximum number of R doublings in the limit R -> infinity
R_MAX_DOUBLINGS = int(os.getenv("GF_R_MAX_DOUBLINGS", "8"))

# Largest dt of the conservative run that extracts N
EIGEN_MAX_DT = float(os.getenv("GF_EIGEN_MAX_DT", "0.01"))

# Time cap for the long-time conservative run that extracts N
DIRECT_EIGEN_T_MAX = float(os.getenv("GF_DIRECT_EIGEN_T_MAX", "200.0"))

# ============================================================================
# CERTIFICATE SETTINGS
# ============================================================================

# Safety factor applied to the grid supremum of the drift function
DRIFT_SAFETY = float(os.getenv("GF_DRIFT_SAFETY", "1.05"))

# Number of log-spaced probes on [1e-6, 1e6] for the drift supremum
DRIFT_PROBES = int(os.getenv("GF_DRIFT_PROBES", "10000"))

# Relative slack of the empirical drift inequality
DRIFT_SLACK = float(os.getenv("GF_DRIFT_SLACK", "0.01"))

# Number of Dirac probes across the small set
SMALLSET_PROBES = int(os.getenv("GF_SMALLSET_PROBES", "33"))

# Relative density floor that delimits the support of an evolved Dirac
DIRAC_FLOOR = float(os.getenv("GF_DIRAC_FLOOR", "1e-10"))

# ============================================================================
# RATE FITTING SETTINGS
# ============================================================================

# Minimum number of snapshots inside the fit window
RATE_MIN_SNAPSHOTS = int(os.getenv("GF_RATE_MIN_SNAPSHOTS", "10"))

# Minimum coefficient of determination of the log-linear fit
RATE_MIN_R2 = float(os.getenv("GF_RATE_MIN_R2", "0.98"))

# Relative amplitude of the detrended log residual that counts as oscillation
OSCILLATION_AMPLITUDE = float(os.getenv("GF_OSCILLATION_AMPLITUDE", "0.10"))

# ============================================================================
# VALIDATION
# ============================================================================

def validate_config():
    """Validates configuration settings"""
    errors = []

    if LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        errors.append(f"GF_LOG must be a logging level name, got {LOG_LEVEL}")

    if THREADS < 1:
        errors.append("GF_THREADS must be at least 1")

    if not 0.0 < STABILITY_CFL <= 1.0:
        errors.append("GF_STABILITY_CFL must lie in (0, 1]")

    if REACTION_MAX_SUBSTEP <= 0.0 or EIGEN_MAX_DT <= 0.0:
        errors.append("GF_REACTION_MAX_SUBSTEP and GF_EIGEN_MAX_DT must be positive")

    if DUAL_TOL <= 0.0:
        errors.append("GF_DUAL_TOL must be positive")

    if DUAL_MAX_ITER < 1 or R_MAX_DOUBLINGS < 1:
        errors.append("GF_DUAL_MAX_ITER and GF_R_MAX_DOUBLINGS must be positive")

    if DRIFT_SAFETY < 1.0:
        errors.append("GF_DRIFT_SAFETY must be at least 1")

    if SMALLSET_PROBES < 2:
        errors.append("GF_SMALLSET_PROBES must be at least 2 (both ends of the small set)")

    if not 0.0 < RATE_MIN_R2 <= 1.0:
        errors.append("GF_RATE_MIN_R2 must lie in (0, 1]")

    if errors:
        raise ValueError("Configuration errors:\n" + "\n".join(f"- {error}" for error in errors))

# Validate configuration on import
validate_config()
