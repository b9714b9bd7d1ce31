"""Configuration and constants for the allocation planner."""

from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError


# Directory configuration
OUTPUT_DIR = Path("output")
CONFIGS_DIR = Path("configs")

# Matrix kernel tolerances
TOL_PSD = 1e-10          # relative to max(1, max|m|)
TOL_RANK = 1e-10         # relative to max|eigenvalue|
SOLVE_JITTER = 1e-12     # times trace(m)/d
SYMMETRY_TOL = 1e-8      # relative to max(1, max|m|)

# Per-batch fits
NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-8

# Planner (Adam over softmax logits)
LEARNING_RATE = 0.1
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
NUM_STEPS = 200
NUM_SCENARIOS = 512
USE_QMC = True
BUDGET_PENALTY = 1e3

# Baselines
TTTS_BETA = 0.5
TTTS_RESAMPLE_CAP = 100
DTS_DRAWS = 4096

# Prior rule: Sigma_0 = lambda I, lambda = C_PRIOR_FACTOR * mean(s^2) / mean(n_t)
C_PRIOR_FACTOR = 100.0

# Reporting
CSV_FLOAT_FORMAT = "%.17g"
RUNS_COLUMNS = [
    "policy_id",
    "instance_id",
    "replication",
    "seed",
    "simple_regret",
    "cumulative_regret",
    "policy_regret",
    "topk_regret",
    "chosen_arm",
    "allocations",
]
TIMINGS_COLUMNS = ["policy_id", "instance_id", "replication", "wall_time"]
QUANTILE_LEVELS = list(range(0, 101))

# CLI exit codes
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

# Text strings for CLI output
TEXTS = {
    "plan_header": "Solving residual horizon plan",
    "simulate_header": "Simulating one episode",
    "bench_header": "Running benchmark",
    "pareto_header": "Running Pareto sweep",
    "quantiles_header": "Computing regret quantiles",
    "gen_asos_header": "Generating ASOS-like instance",
    "verify_header": "Running verification checks",
    "wrote": "  → Wrote",
    "done": "Done!",
    "config_error": "Configuration error",
    "numerical_error": "Numerical failure",
    "check_pass": "PASS",
    "check_fail": "FAIL",
    "pareto_monotone": "RHO simple regret non-increasing in the simple-regret weight",
    "pareto_not_monotone": "RHO simple regret is NOT monotone in the simple-regret weight",
}


def get_text(key: str) -> str:
    """Get text string."""
    return TEXTS.get(key, key)


def load_config(path: Path | str) -> dict[str, Any]:
    """Load a YAML key/value configuration file.

    Args:
        path: Path to the YAML file

    Returns:
        Parsed configuration dictionary (empty dict for an empty file)

    Raises:
        ConfigError: If the file is missing, unparsable or not a mapping
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        line = None
        mark = getattr(e, 'problem_mark', None)
        if mark is not None:
            line = mark.line + 1
        raise ConfigError(f"Error parsing YAML in {path.name}: {e}", line=line) from e

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Top level of {path.name} must be a mapping")
    return data
