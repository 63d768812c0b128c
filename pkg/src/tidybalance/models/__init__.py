"""Pydantic models for populations, splits, references and simulation results."""

from tidybalance.models.balance_models import *
from tidybalance.models.simulation_models import *

__all__ = [
    "AdhocSummary",
    "BoxplotRow",
    "DesignScore",
    "ApproxQuery",
    "BalanceConfig",
    "BalanceReport",
    "EcdfFamily",
    "FiveNumberSummary",
    "Grid",
    "ModeKind",
    "Population",
    "ReferenceMode",
    "ReferenceProvenance",
    "ReferenceSet",
    "SamplingScheme",
    "SchemeKind",
    "SeededRng",
    "SmdVector",
    "SplitSample",
    "Scenario",
    "SimulationConfig",
    "SimulationRecord",
    "SimulationResult",
    "StudyDesign",
]
