"""TidyBalance - Covariate balance of two study arms drawn from a finite population."""

from tidybalance.core import *
from tidybalance.errors import *
from tidybalance.models import *

__all__ = [
    # Descriptive statistics
    "population_moments",
    "sample_moments",
    "smd",
    "count_imbalanced",
    "adhoc_assess",
    "adhoc_acceptance_rate",
    "five_number_summary",
    # Approximation
    "prob_dim_imbalanced",
    "prob_declared_balanced",
    "table1",
    # Sampling
    "enumerate_splits",
    "enumerate_scheme",
    "draw_split",
    "cluster_draw",
    "build_reference",
    # Pseudo p-values
    "default_grid",
    "exact_grid",
    "ecdf_family",
    "pseudo_p",
    "random_pseudo_p",
    "standardized_pseudo_p",
    "assess",
    "assess_with_distribution",
    # Simulation
    "generate_population",
    "run_scenario",
    "run_simulation",
    "best_design_shares",
    "threshold_shares",
    "boxplot_summary",
    # Models
    "Population",
    "SplitSample",
    "SmdVector",
    "BalanceConfig",
    "ApproxQuery",
    "SamplingScheme",
    "SchemeKind",
    "SeededRng",
    "ReferenceMode",
    "Grid",
    "ReferenceSet",
    "EcdfFamily",
    "BalanceReport",
    "Scenario",
    "StudyDesign",
    "SimulationConfig",
    "SimulationResult",
    # Errors
    "BalanceError",
    "InvalidInputError",
    "ZeroVarianceError",
    "GridCoverageError",
    "ProvenanceMismatchError",
    "InfeasibleSchemeError",
    "EnumerationCapError",
    "InputParseError",
]
