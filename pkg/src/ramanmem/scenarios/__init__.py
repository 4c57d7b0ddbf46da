"""Versioned experiment reproductions: configs, expected metrics, pipelines."""

from .core import (
    PIPELINE_METRICS,
    PIPELINES,
    Expectation,
    ReportRow,
    ScenarioFixture,
    ScenarioReport,
    Stage,
    default_pipeline,
    simulate_stage,
    fixture_root,
    format_expected,
    list_fixtures,
    load_fixture,
    parse_expected,
    run_pipeline,
    run_scenario,
)

__all__ = [
    "PIPELINE_METRICS",
    "PIPELINES",
    "Expectation",
    "ReportRow",
    "ScenarioFixture",
    "ScenarioReport",
    "Stage",
    "default_pipeline",
    "simulate_stage",
    "fixture_root",
    "format_expected",
    "list_fixtures",
    "load_fixture",
    "parse_expected",
    "run_pipeline",
    "run_scenario",
]
