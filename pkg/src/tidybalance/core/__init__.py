"""Core functionality for tidybalance."""

from tidybalance.core.approx import prob_declared_balanced, prob_dim_imbalanced, table1
from tidybalance.core.balance import (
    adhoc_acceptance_rate,
    adhoc_assess,
    count_imbalanced,
    five_number_summary,
    population_moments,
    sample_moments,
    smd,
)
from tidybalance.core.pseudo_p import (
    assess,
    assess_with_distribution,
    default_grid,
    ecdf_family,
    exact_grid,
    pseudo_p,
    random_pseudo_p,
    standardized_pseudo_p,
)
from tidybalance.core.sampling import (
    build_reference,
    cluster_draw,
    draw_split,
    enumerate_scheme,
    enumerate_splits,
)
from tidybalance.core.simulation import (
    best_design_shares,
    boxplot_summary,
    generate_population,
    run_scenario,
    run_simulation,
    threshold_shares,
)

__all__ = [
    "population_moments",
    "sample_moments",
    "smd",
    "count_imbalanced",
    "adhoc_assess",
    "adhoc_acceptance_rate",
    "five_number_summary",
    "prob_dim_imbalanced",
    "prob_declared_balanced",
    "table1",
    "enumerate_splits",
    "enumerate_scheme",
    "draw_split",
    "cluster_draw",
    "build_reference",
    "default_grid",
    "exact_grid",
    "ecdf_family",
    "pseudo_p",
    "random_pseudo_p",
    "standardized_pseudo_p",
    "assess",
    "assess_with_distribution",
    "generate_population",
    "run_scenario",
    "run_simulation",
    "best_design_shares",
    "threshold_shares",
    "boxplot_summary",
]
