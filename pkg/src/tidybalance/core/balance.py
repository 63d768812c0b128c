"""Descriptive statistics of a split: moments, SMDs, imbalance counts and the ad-hoc procedure."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from tidybalance.errors import InvalidInputError
from tidybalance.models.balance_models import (
    BalanceConfig,
    FiveNumberSummary,
    Population,
    ReferenceSet,
    SmdVector,
    SplitSample,
)


def population_moments(pop: Population) -> tuple[np.ndarray, np.ndarray]:
    """Per-covariate population means and SDs (denominator K - 1)."""
    return pop.means, pop.sds


def sample_moments(pop: Population, a: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-covariate means and SDs (denominator |A| - 1) over the units in `a`.

    The SDs are NaN when `a` holds a single unit.
    """
    idx = np.asarray(a, dtype=np.intp)
    if idx.size == 0:
        raise InvalidInputError("Cannot take moments of an empty index set")
    if idx.min() < 0 or idx.max() >= pop.k:
        raise InvalidInputError(f"Index set {idx.tolist()} out of range for K = {pop.k}")
    sub = pop.columns[:, idx]
    means = sub.mean(axis=1)
    if idx.size == 1:
        return means, np.full(pop.j, np.nan)
    return means, sub.std(axis=1, ddof=1)


def smd_kernel(pop: Population, m_idx: np.ndarray, n_idx: np.ndarray) -> np.ndarray:
    """
    SMDs of many splits at once.

    Args:
        pop: The population whose SDs scale the differences.
        m_idx: (R, |M|) index matrix, one split per row.
        n_idx: (R, |N|) index matrix.

    Returns:
        (R, J) matrix of |mean_M - mean_N| / S_j.
    """
    m_means = pop.columns[:, m_idx].mean(axis=2)
    n_means = pop.columns[:, n_idx].mean(axis=2)
    diff = np.abs(m_means - n_means) / pop.sds[:, None]
    return np.ascontiguousarray(diff.T)


def smd(pop: Population, split: SplitSample) -> SmdVector:
    """Non-directional SMD of every covariate, scaled by the population SD."""
    split.check_bounds(pop.k)
    m_idx = np.array([split.m_indices], dtype=np.intp)
    n_idx = np.array([split.n_indices], dtype=np.intp)
    return SmdVector(deltas=smd_kernel(pop, m_idx, n_idx)[0])


def count_imbalanced(smd: SmdVector, delta: float) -> int:
    """R^delta: the number of covariates with SMD >= delta."""
    if delta <= 0:
        raise InvalidInputError(f"delta must be positive, got {delta}")
    return int(np.count_nonzero(smd.deltas >= delta))


def adhoc_assess(smd: SmdVector, cfg: BalanceConfig) -> tuple[bool, int]:
    """Declare the split balanced when at most `cfg.max_imbalanced` SMDs reach the cutoff."""
    r_delta = count_imbalanced(smd, cfg.delta_cutoff)
    return r_delta <= cfg.max_imbalanced, r_delta


def adhoc_acceptance_rate(ref: ReferenceSet, cfg: BalanceConfig) -> float:
    """Share of reference splits the ad-hoc procedure would declare balanced."""
    r = np.count_nonzero(ref.smd_rows >= cfg.delta_cutoff, axis=1)
    return float(np.mean(r <= cfg.max_imbalanced))


def five_number_summary(values: Sequence[float] | np.ndarray) -> FiveNumberSummary:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise InvalidInputError("Cannot summarize an empty sequence")
    q = np.percentile(arr, [0, 25, 50, 75, 100])
    return FiveNumberSummary(
        min=float(q[0]), q1=float(q[1]), median=float(q[2]), q3=float(q[3]), max=float(q[4])
    )


## Tests


def _toy() -> Population:
    return Population(
        values=[[0.0], [0.0], [1.0], [1.0]], covariate_names=["x"], unit_ids=["a", "b", "c", "d"]
    )


def test_population_moments_toy():
    means, sds = population_moments(_toy())
    assert means[0] == 0.5
    assert np.isclose(sds[0], np.sqrt(1 / 3))

    two = Population(values=[[-1.0], [1.0]], covariate_names=["x"], unit_ids=["a", "b"])
    means, sds = population_moments(two)
    assert means[0] == 0.0
    assert np.isclose(sds[0], np.sqrt(2))


def test_sample_moments():
    pop = _toy()
    means, sds = sample_moments(pop, [2, 3])
    assert means[0] == 1.0 and sds[0] == 0.0
    means, sds = sample_moments(pop, [0, 2])
    assert means[0] == 0.5
    assert np.isclose(sds[0], np.sqrt(0.5))
    _, sds = sample_moments(pop, [1])
    assert np.isnan(sds[0])
    all_means, all_sds = sample_moments(pop, range(4))
    assert np.allclose(all_means, pop.means) and np.allclose(all_sds, pop.sds)


def test_smd_toy():
    pop = _toy()
    assert smd(pop, SplitSample(m_indices=[0], n_indices=[1])).deltas[0] == 0.0
    forward = smd(pop, SplitSample(m_indices=[0], n_indices=[2]))
    assert np.isclose(forward.deltas[0], np.sqrt(3))
    backward = smd(pop, SplitSample(m_indices=[2], n_indices=[0]))
    assert forward.deltas[0] == backward.deltas[0]


def test_count_imbalanced_boundary():
    v = SmdVector(deltas=[0.05, 0.25, 0.25])
    assert count_imbalanced(v, 0.25) == 2
    assert count_imbalanced(v, 0.3) == 0
    assert count_imbalanced(SmdVector(deltas=[0.0, 0.0, 0.0]), 0.01) == 0


def test_adhoc_assess():
    v = SmdVector(deltas=[0.05, 0.25, 0.25])
    assert adhoc_assess(v, BalanceConfig(delta_cutoff=0.2, max_imbalanced=2)) == (True, 2)
    assert adhoc_assess(v, BalanceConfig(delta_cutoff=0.2, max_imbalanced=1)) == (False, 2)
    zeros = SmdVector(deltas=[0.0, 0.0])
    assert adhoc_assess(zeros, BalanceConfig(delta_cutoff=0.1, max_imbalanced=0))[0]


def test_five_number_summary_constant():
    s = five_number_summary([0.3, 0.3, 0.3])
    assert s.min == s.q1 == s.median == s.q3 == s.max == 0.3
