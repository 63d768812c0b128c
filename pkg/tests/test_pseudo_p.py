"""Test ECDF families, pseudo p-values and the assessment pipeline."""

import numpy as np

from tidybalance.core.balance import smd
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
from tidybalance.core.sampling import build_reference
from tidybalance.errors import GridCoverageError, InvalidInputError, ProvenanceMismatchError
from tidybalance.models.balance_models import (
    BalanceConfig,
    Grid,
    Population,
    ReferenceMode,
    SamplingScheme,
    SchemeKind,
    SmdVector,
    SplitSample,
)

SRS_1_1 = SamplingScheme(m_size=1, n_size=1)


def toy_population() -> Population:
    return Population(
        values=[[0.0], [0.0], [1.0], [1.0]], covariate_names=["x"], unit_ids=["a", "b", "c", "d"]
    )


def random_population(k: int, j: int, seed: int) -> Population:
    values = np.random.default_rng(seed).normal(size=(k, j))
    return Population(
        values=values,
        covariate_names=[f"x{i}" for i in range(j)],
        unit_ids=[str(i) for i in range(k)],
    )


def test_toy_ecdf_family():
    """Test the toy family: one third of the splits have no imbalanced covariate."""
    ref = build_reference(toy_population(), SRS_1_1, ReferenceMode.exhaustive())
    fam = ecdf_family(ref, Grid(deltas=[0.5, 1.0, 1.5, 2.0]))
    assert fam.cdf(1.0, 0) * 3 == 1.0
    assert fam.cdf(1.0, -1) == 0.0
    assert fam.cdf(1.0, 1) == 1.0
    # Above every reference SMD nothing is imbalanced
    assert fam.cdf(2.0, 0) == 1.0
    # F is non-decreasing in delta for every a
    assert (np.diff(fam.cumulative, axis=0) >= 0).all()


def test_toy_pseudo_p():
    """Test pseudo p-values of the two kinds of toy splits."""
    pop = toy_population()
    ref = build_reference(pop, SRS_1_1, ReferenceMode.exhaustive())
    fam = ecdf_family(ref, default_grid(ref=ref))

    p, _ = pseudo_p(smd(pop, SplitSample(m_indices=[0], n_indices=[1])), fam)
    assert p == 1.0

    p, argmin = pseudo_p(smd(pop, SplitSample(m_indices=[0], n_indices=[2])), fam)
    assert p == 2 / 3
    assert argmin == 0.01

    dist = random_pseudo_p(ref, fam)
    assert sorted(dist.tolist()) == [2 / 3] * 8 + [1.0] * 4
    assert standardized_pseudo_p(p, dist) == 2 / 3


def test_toy_assess_enumerate_and_monte_carlo():
    """Test the full pipeline on the toy population, exactly and by Monte Carlo."""
    pop = toy_population()
    split = SplitSample(m_indices=[0], n_indices=[2])
    report = assess(pop, split, SRS_1_1, mode=ReferenceMode.exhaustive())
    assert report.p == 2 / 3
    assert report.p_star == 2 / 3
    assert report.reference_size == 12
    assert report.provenance.mode.kind == "enumerate"

    sampled = assess(pop, split, SRS_1_1, mode=ReferenceMode.monte_carlo(100_000), seed=1)
    assert abs(sampled.p - 2 / 3) < 0.01
    assert sampled.provenance.seed == 1


def test_grid_coverage_error():
    """Test that a grid below the observed maximum SMD is refused."""
    pop = toy_population()
    ref = build_reference(pop, SRS_1_1, ReferenceMode.exhaustive())
    fam = ecdf_family(ref, Grid(deltas=[0.5, 1.0]))
    try:
        pseudo_p(smd(pop, SplitSample(m_indices=[0], n_indices=[2])), fam)
    except GridCoverageError:
        pass
    else:
        raise AssertionError("Expected GridCoverageError")


def test_cluster_toy_support():
    """Test that the two-cluster scheme only yields pseudo p-values .5 and 1."""
    for seed in range(20):
        pop = random_population(4, 1, seed)
        scheme = SamplingScheme(kind=SchemeKind.cluster, m_size=1, n_size=1, clusters=((0, 1), (2, 3)))
        ref = build_reference(pop, scheme, ReferenceMode.exhaustive())
        observed = smd(pop, SplitSample(m_indices=[0], n_indices=[1]))
        fam = ecdf_family(ref, exact_grid(observed, ref))
        dist = random_pseudo_p(ref, fam)
        assert sorted(set(dist.tolist())) == [0.5, 1.0]

        other = smd(pop, SplitSample(m_indices=[2], n_indices=[3]))
        p, _ = pseudo_p(observed, fam)
        assert p == (0.5 if observed.max() > other.max() else 1.0)


def test_grid_refinement_never_increases_p():
    """Test that adding cutoffs can only lower p, and the exact set attains the minimum."""
    pop = random_population(10, 3, seed=12)
    scheme = SamplingScheme(m_size=2, n_size=3)
    ref = build_reference(pop, scheme, ReferenceMode.exhaustive())
    for m, n in [([0, 1], [2, 3, 4]), ([5, 9], [1, 2, 3]), ([7, 8], [0, 4, 6])]:
        observed = smd(pop, SplitSample(m_indices=m, n_indices=n))
        coarse = default_grid(observed, ref, step=0.1)
        exact = exact_grid(observed, ref)
        fine = coarse.refined(exact.deltas).refined(default_grid(observed, ref, step=0.003).deltas)
        p_coarse, _ = pseudo_p(observed, ecdf_family(ref, coarse))
        p_exact, _ = pseudo_p(observed, ecdf_family(ref, exact))
        p_fine, _ = pseudo_p(observed, ecdf_family(ref, fine))
        assert p_exact <= p_coarse
        assert p_fine == p_exact


def test_standardized_is_monotone():
    """Test that p* is a non-decreasing function of p over a fixed distribution."""
    pop = random_population(30, 4, seed=3)
    ref = build_reference(pop, SamplingScheme(m_size=4, n_size=6), ReferenceMode.monte_carlo(3000), seed=2)
    fam = ecdf_family(ref, default_grid(ref=ref))
    dist = random_pseudo_p(ref, fam)
    values = np.unique(dist)
    stars = [standardized_pseudo_p(v, dist) for v in values]
    assert stars == sorted(stars)
    assert stars[-1] == 1.0
    assert (dist > 0).all() and (dist <= 1).all()


def test_reference_reuse_matches_direct_assessment():
    """Test that a prebuilt reference gives the same report as building it in place."""
    pop = random_population(40, 5, seed=8)
    scheme = SamplingScheme(m_size=4, n_size=8)
    split = SplitSample(m_indices=[0, 1, 2, 3], n_indices=list(range(20, 28)))
    mode = ReferenceMode.monte_carlo(5000)
    direct = assess(pop, split, scheme, mode=mode, seed=21)
    ref = build_reference(pop, scheme, mode, seed=21)
    reused = assess(pop, split, scheme, reference=ref)
    assert reused == direct


def test_reference_provenance_checks():
    """Test that a reference built for another population or size is refused."""
    pop = random_population(20, 2, seed=1)
    other = random_population(20, 2, seed=2)
    scheme = SamplingScheme(m_size=2, n_size=3)
    ref = build_reference(other, scheme, ReferenceMode.monte_carlo(500), seed=1)
    split = SplitSample(m_indices=[0, 1], n_indices=[2, 3, 4])
    try:
        assess(pop, split, scheme, reference=ref)
    except ProvenanceMismatchError:
        pass
    else:
        raise AssertionError("Expected a population mismatch")

    ref = build_reference(pop, SamplingScheme(m_size=3, n_size=2), ReferenceMode.monte_carlo(500), seed=1)
    try:
        assess(pop, split, scheme, reference=ref)
    except ProvenanceMismatchError:
        pass
    else:
        raise AssertionError("Expected a size mismatch")


def test_reference_must_match_scheme_parameters():
    """Test that a reference built for another partial split or cluster partition is refused."""
    pop = random_population(12, 2, seed=4)
    split = SplitSample(m_indices=[0, 1], n_indices=[2, 3])
    built = SamplingScheme(kind=SchemeKind.partial, m_size=2, n_size=2, partial_first=0)
    wanted = SamplingScheme(kind=SchemeKind.partial, m_size=2, n_size=2, partial_first=2)
    ref = build_reference(pop, built, ReferenceMode.exhaustive())
    try:
        assess(pop, split, wanted, reference=ref)
    except ProvenanceMismatchError as e:
        assert "first=0" in str(e)
    else:
        raise AssertionError("Expected a partial_first mismatch")
    assert assess(pop, split, built, reference=ref).provenance.scheme == built

    halves = SamplingScheme(
        kind=SchemeKind.cluster, m_size=2, n_size=2, clusters=(tuple(range(6)), tuple(range(6, 12)))
    )
    alternating = SamplingScheme(
        kind=SchemeKind.cluster, m_size=2, n_size=2, clusters=(tuple(range(0, 12, 2)), tuple(range(1, 12, 2)))
    )
    ref = build_reference(pop, halves, ReferenceMode.exhaustive())
    try:
        assess(pop, split, alternating, reference=ref)
    except ProvenanceMismatchError:
        pass
    else:
        raise AssertionError("Expected a cluster partition mismatch")


def test_split_sizes_must_match_scheme():
    """Test that the observed split sizes must be the scheme's sizes."""
    try:
        assess(toy_population(), SplitSample(m_indices=[0], n_indices=[1, 2]), SRS_1_1)
    except InvalidInputError:
        pass
    else:
        raise AssertionError("Expected InvalidInputError")


def test_report_contents():
    """Test the report's SMD table, R profile and ad-hoc summaries."""
    pop = random_population(30, 6, seed=5)
    scheme = SamplingScheme(m_size=3, n_size=9)
    split = SplitSample(m_indices=[0, 1, 2], n_indices=list(range(10, 19)))
    cfg = BalanceConfig(delta_cutoff=0.2, max_imbalanced=2)
    report, dist = assess_with_distribution(
        pop, split, scheme, mode=ReferenceMode.monte_carlo(4000), seed=3, adhoc=[cfg]
    )
    observed = smd(pop, split)
    assert np.allclose(report.smds, observed.deltas)
    assert report.smd_summary.max == observed.max()
    assert len(report.r_profile) == report.grid_size
    assert report.r_profile == sorted(report.r_profile, reverse=True)
    assert report.grid_step == 0.01 and report.grid_max >= 3.0
    assert len(dist) == report.reference_size == 4000
    assert 0 < report.p <= 1 and 0 <= report.p_star <= 1

    adhoc = report.adhoc[0]
    assert adhoc.observed_r == int((observed.deltas >= 0.2).sum())
    assert adhoc.balanced == (adhoc.observed_r <= 2)
    assert 0 <= adhoc.reference_accept_rate <= 1

    row = report.to_row()
    assert row["p"] == report.p and "smd_x0" in row


def test_exact_assessment():
    """Test that exact mode gives the exact-grid pseudo p-value."""
    pop = random_population(8, 2, seed=4)
    scheme = SamplingScheme(m_size=2, n_size=2)
    split = SplitSample(m_indices=[0, 1], n_indices=[6, 7])
    report = assess(pop, split, scheme, mode=ReferenceMode.exhaustive(), exact=True)
    ref = build_reference(pop, scheme, ReferenceMode.exhaustive())
    observed = smd(pop, split)
    p, _ = pseudo_p(observed, ecdf_family(ref, exact_grid(observed, ref)))
    assert report.p == p
    assert report.grid_step is None


def test_smd_vector_rejects_negative_entries():
    """Test SMD vector validation."""
    try:
        SmdVector(deltas=[0.1, -0.2])
    except InvalidInputError:
        pass
    else:
        raise AssertionError("Expected InvalidInputError")
