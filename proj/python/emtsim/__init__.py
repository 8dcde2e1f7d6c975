"""Fixed-timestep EMT simulation of an AC grid with synchronous machines,
grid-following inverters and aggregated offshore wind plants."""

from ._core import (
    Recording,
    Scenario,
    SystemCase,
    PowerFlowSolution,
    __version__,
    apply_wind_profile,
    load_case,
    load_scenario,
    parse_case,
    rebase,
    run_simulation,
    serialize_case,
    solve_powerflow,
    validate_case,
)

__all__ = [
    "Recording",
    "Scenario",
    "SystemCase",
    "PowerFlowSolution",
    "__version__",
    "apply_wind_profile",
    "load_case",
    "load_scenario",
    "parse_case",
    "rebase",
    "run_simulation",
    "serialize_case",
    "solve_powerflow",
    "validate_case",
]
