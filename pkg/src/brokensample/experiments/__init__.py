"""Config-driven Monte-Carlo experiments with CSV and SVG output."""

from .config import DEFAULT_CONFIGS, ExperimentConfig, load_config
from .oracles import OracleResult, run_oracle_checks
from .plotting import freedman_diaconis_bins, render_svg
from .runners import (LimitTable, RunResult, run_cv_sweep, run_limit_convergence,
                      run_loss_curves, run_simulate)

__all__ = ["DEFAULT_CONFIGS", "ExperimentConfig", "load_config", "OracleResult",
           "run_oracle_checks", "freedman_diaconis_bins", "render_svg", "LimitTable",
           "RunResult", "run_cv_sweep", "run_limit_convergence", "run_loss_curves",
           "run_simulate"]
