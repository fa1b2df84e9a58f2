"""Transferability scenarios: craft on a source network, evaluate on a target."""

from .grid import IFGSM_EPSILONS, JSMA_THETAS, default_pairs, default_suite_cases, reference_grid
from .registry import ModelRegistry
from .reports import load_reports, matrix_rows, read_report, render_csv, render_markdown, write_matrix, write_report
from .runner import CraftCache, CraftedSet, ScenarioReport, SuiteResult, craft_on_source, run_case, run_suite, select_samples, transfer_metrics
from .scenario import ModelRef, Scenario, ScenarioCase, case_for, classify, validate_case

__all__ = [
    "CraftCache",
    "CraftedSet",
    "IFGSM_EPSILONS",
    "JSMA_THETAS",
    "ModelRef",
    "ModelRegistry",
    "Scenario",
    "ScenarioCase",
    "ScenarioReport",
    "SuiteResult",
    "case_for",
    "classify",
    "craft_on_source",
    "default_pairs",
    "default_suite_cases",
    "load_reports",
    "matrix_rows",
    "reference_grid",
    "read_report",
    "render_csv",
    "render_markdown",
    "run_case",
    "run_suite",
    "select_samples",
    "transfer_metrics",
    "validate_case",
    "write_matrix",
    "write_report",
]
