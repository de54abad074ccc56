"""Desk-scale studies: envelope area versus N, one-step safe control, oracle check."""

from .area import AreaConfig, AreaTrialReport, run_area_comparison, summarize_area
from .control import (
    ControlConfig,
    ControlMethod,
    ControlProblem,
    ControlSolution,
    ControlTrialReport,
    run_control_study,
    solve_safe_control,
    summarize_control,
)
from .oracle_check import OracleCheckConfig, OracleCheckReport, random_instance, run_oracle_check

__all__ = [
    "AreaConfig",
    "AreaTrialReport",
    "ControlConfig",
    "ControlMethod",
    "ControlProblem",
    "ControlSolution",
    "ControlTrialReport",
    "OracleCheckConfig",
    "OracleCheckReport",
    "random_instance",
    "run_area_comparison",
    "run_control_study",
    "run_oracle_check",
    "solve_safe_control",
    "summarize_area",
    "summarize_control",
]
