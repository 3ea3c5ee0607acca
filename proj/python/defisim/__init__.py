"""Deterministic pooled-lending protocol simulator with risk analytics."""

from ._defisim import (
    DefisimError,
    Fixed,
    KinkedRateModel,
    LinearRateModel,
    PriceTable,
    Protocol,
    analyze_fixture_file,
    borrow_rate,
    cli,
    expected_shortfall,
    fdiv,
    fmul,
    infinite_health,
    optimal_utilization,
    quoted_margin,
    run_scenario_file,
    run_scenario_json,
    supply_rates,
)

__all__ = [
    "DefisimError",
    "Fixed",
    "KinkedRateModel",
    "LinearRateModel",
    "PriceTable",
    "Protocol",
    "analyze_fixture_file",
    "borrow_rate",
    "cli",
    "expected_shortfall",
    "fdiv",
    "fmul",
    "infinite_health",
    "optimal_utilization",
    "quoted_margin",
    "run_scenario_file",
    "run_scenario_json",
    "supply_rates",
]
