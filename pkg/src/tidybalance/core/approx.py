"""
Normal-binomial approximation of how often SRS samples pass the ad-hoc procedure.

Each covariate's mean difference is treated as normal with variance (1/n + 1/m) S_j^2
(no finite population correction), and the number of imbalanced covariates as binomial.
"""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import special, stats

from tidybalance.errors import InvalidInputError
from tidybalance.models.balance_models import ApproxQuery

TABLE1_SETTINGS: list[tuple[float, int, int]] = [
    (0.2, 4, 40),
    (0.3, 4, 40),
    (0.2, 10, 10),
    (0.3, 10, 10),
    (0.2, 40, 40),
    (0.3, 40, 40),
    (0.2, 100, 100),
    (0.3, 100, 100),
]


class Table1Row(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    delta: float
    g: int
    m: int
    p_dim: float
    p_bal_j10_r1: float = Field(serialization_alias="p_bal_J10_r1")
    p_bal_j20_r2: float = Field(serialization_alias="p_bal_J20_r2")


def prob_dim_imbalanced(n: int, m: int, delta: float) -> float:
    """Approximate P(SMD_j >= delta) for one covariate: 2 - 2 Phi(delta / sqrt(1/n + 1/m))."""
    if n < 1 or m < 1:
        raise InvalidInputError(f"Arm sizes must be at least 1, got n={n}, m={m}")
    if not delta > 0:
        raise InvalidInputError(f"delta must be positive, got {delta}")
    z = delta / math.sqrt(1 / n + 1 / m)
    # 2 - 2 Phi(z) == erfc(z / sqrt(2)), without cancellation in the tail
    return float(special.erfc(z / math.sqrt(2)))


def prob_declared_balanced(q: ApproxQuery) -> float:
    """P(Bin(J, p_dim) <= r), summed exactly in log space."""
    if q.r_max >= q.j_dims:
        return 1.0
    p1 = prob_dim_imbalanced(q.n, q.m, q.delta)
    log_terms = stats.binom.logpmf(np.arange(q.r_max + 1), q.j_dims, p1)
    return float(min(1.0, math.exp(special.logsumexp(log_terms))))


def table1() -> list[Table1Row]:
    """Acceptance probabilities for the ad-hoc procedure at the conventional settings."""
    rows = []
    for delta, g, m in TABLE1_SETTINGS:
        rows.append(
            Table1Row(
                delta=delta,
                g=g,
                m=m,
                p_dim=prob_dim_imbalanced(g, m, delta),
                p_bal_j10_r1=prob_declared_balanced(
                    ApproxQuery(n=g, m=m, delta=delta, j_dims=10, r_max=1)
                ),
                p_bal_j20_r2=prob_declared_balanced(
                    ApproxQuery(n=g, m=m, delta=delta, j_dims=20, r_max=2)
                ),
            )
        )
    return rows


## Tests


def test_prob_dim_imbalanced_known_values():
    assert abs(prob_dim_imbalanced(4, 40, 0.2) - 0.703) < 0.001
    assert abs(prob_dim_imbalanced(100, 100, 0.3) - 0.034) < 0.001
    assert prob_dim_imbalanced(10, 10, 1e-9) > 0.999999


def test_prob_declared_balanced_known_values():
    assert abs(prob_declared_balanced(ApproxQuery(n=4, m=40, delta=0.2, j_dims=10, r_max=1)) - 0.0001) < 5e-5
    assert abs(prob_declared_balanced(ApproxQuery(n=40, m=40, delta=0.3, j_dims=20, r_max=2)) - 0.276) < 0.005
    assert prob_declared_balanced(ApproxQuery(n=4, m=4, delta=0.1, j_dims=5, r_max=5)) == 1.0
