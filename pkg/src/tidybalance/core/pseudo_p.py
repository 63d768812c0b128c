"""
Pseudo p-values of an observed split against the reference distribution of an ideal
sampling scheme.

For every cutoff delta on a grid, the reference splits give the distribution of
R^delta, the number of covariates with SMD >= delta. The pseudo p-value of an observed
split is the smallest, over the grid, share of reference splits with at least as many
imbalanced covariates as observed. The standardized pseudo p-value ranks that value
within the pseudo p-values of the reference splits themselves.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from funlog import log_calls

from tidybalance.core.balance import adhoc_acceptance_rate, adhoc_assess, five_number_summary, smd
from tidybalance.core.sampling import MC_CHUNK_ROUNDS, build_reference
from tidybalance.errors import GridCoverageError, InvalidInputError, ProvenanceMismatchError
from tidybalance.models.balance_models import (
    AdhocSummary,
    BalanceConfig,
    BalanceReport,
    EcdfFamily,
    Grid,
    Population,
    ReferenceMode,
    ReferenceSet,
    SamplingScheme,
    SmdVector,
    SplitSample,
)

logger = logging.getLogger(__name__)

DEFAULT_GRID_STEP = 0.01
DEFAULT_GRID_MAX = 3.0
DEFAULT_ROUNDS = 10_000


def default_grid(
    observed: SmdVector | None = None,
    ref: ReferenceSet | None = None,
    step: float = DEFAULT_GRID_STEP,
    upper: float = DEFAULT_GRID_MAX,
) -> Grid:
    """
    Regular grid `step, 2 * step, ...` reaching at least `upper` and one step past the
    largest observed or reference SMD.
    """
    top = upper
    if observed is not None:
        top = max(top, observed.max() + step)
    if ref is not None:
        top = max(top, ref.max() + step)
    return Grid.regular(step, top)


def exact_grid(observed: SmdVector, ref: ReferenceSet) -> Grid:
    """
    Every distinct positive SMD in the reference set or the observed vector.

    R^delta of any split only changes at these values, so the minimum over this set is
    the minimum over all delta > 0.
    """
    values = np.concatenate([ref.smd_rows.ravel(), observed.deltas])
    values = np.unique(values[values > 0])
    if values.size == 0:
        return Grid(deltas=[DEFAULT_GRID_STEP])
    return Grid(deltas=values)


def imbalance_profile(smd_rows: np.ndarray, grid: Grid) -> np.ndarray:
    """
    R^delta of each row at each grid point, shape (rows, grid size).

    Each SMD is binary searched into the grid once: it counts as imbalanced at exactly
    the grid points at or below it. Per-row histograms of those positions, summed from
    the top, give R for the whole grid.
    """
    rows = smd_rows.shape[0]
    width = grid.size + 1
    reach = np.searchsorted(grid.deltas, smd_rows, side="right")
    flat = (np.arange(rows)[:, None] * width + reach).ravel()
    hist = np.bincount(flat, minlength=rows * width).reshape(rows, width)
    from_top = np.cumsum(hist[:, ::-1], axis=1)[:, ::-1]
    return from_top[:, 1:]


def r_profile(observed: SmdVector, grid: Grid) -> np.ndarray:
    return imbalance_profile(observed.deltas[None, :], grid)[0]


def _chunks(rows: int) -> range:
    return range(0, rows, MC_CHUNK_ROUNDS)


@log_calls(level="info", show_timing_only=True)
def ecdf_family(ref: ReferenceSet, grid: Grid, threads: int = 1) -> EcdfFamily:
    """Distribution of R^delta over the reference splits, for every grid cutoff."""
    if grid.max < ref.max():
        logger.warning(
            f"Grid max {grid.max} is below the largest reference SMD {ref.max():.4f}; "
            "reference pseudo p-values cannot be computed with this grid"
        )
    width = ref.j + 1
    offsets = np.arange(grid.size)[None, :] * width

    def chunk(start: int) -> np.ndarray:
        r = imbalance_profile(ref.smd_rows[start : start + MC_CHUNK_ROUNDS], grid)
        return np.bincount((offsets + r).ravel(), minlength=grid.size * width)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        counts = sum(pool.map(chunk, _chunks(ref.rows)))
    return EcdfFamily(
        grid=grid, counts=np.asarray(counts).reshape(grid.size, width), total=ref.rows
    )


def _check_coverage(largest: float, fam: EcdfFamily, what: str) -> None:
    if largest > fam.grid.max:
        raise GridCoverageError(
            f"Grid max {fam.grid.max} is below the largest {what} SMD {largest:.6f}"
        )


def pseudo_p(observed: SmdVector, fam: EcdfFamily) -> tuple[float, float]:
    """
    Smallest reference tail share P(R^delta >= observed R^delta) over the grid.

    Returns:
        `(p, argmin_delta)`, where `argmin_delta` is the smallest grid cutoff attaining p.
    """
    if observed.j != fam.j:
        raise InvalidInputError(f"Observed split has {observed.j} covariates, reference has {fam.j}")
    _check_coverage(observed.max(), fam, "observed")
    tails = fam.tail_counts(r_profile(observed, fam.grid))
    g = int(np.argmin(tails))
    return float(tails[g] / fam.total), float(fam.grid.deltas[g])


def random_pseudo_p(ref: ReferenceSet, fam: EcdfFamily, threads: int = 1) -> np.ndarray:
    """Pseudo p-value of every reference split, each scored against the full family."""
    if ref.rows != fam.total or ref.j != fam.j:
        raise InvalidInputError("The ECDF family was not built from this reference set")
    _check_coverage(ref.max(), fam, "reference")

    def chunk(start: int) -> np.ndarray:
        r = imbalance_profile(ref.smd_rows[start : start + MC_CHUNK_ROUNDS], fam.grid)
        return fam.tail_counts(r).min(axis=1) / fam.total

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.concatenate(list(pool.map(chunk, _chunks(ref.rows))))


def standardized_pseudo_p(p: float, dist: np.ndarray) -> float:
    """Share of reference pseudo p-values at or below `p`."""
    dist = np.asarray(dist)
    if dist.size == 0:
        raise InvalidInputError("The reference pseudo p-value distribution is empty")
    return float(np.count_nonzero(dist <= p) / dist.size)


def check_reference(pop: Population, scheme: SamplingScheme, ref: ReferenceSet) -> None:
    """Refuse a cached reference built for another population, scheme or arm sizes."""
    prov = ref.provenance
    if prov.population_hash != pop.content_hash:
        raise ProvenanceMismatchError(
            "Reference set was built for a different population "
            f"(hash {prov.population_hash[:12]}, expected {pop.content_hash[:12]})"
        )
    if prov.scheme != scheme:
        raise ProvenanceMismatchError(
            f"Reference set was built for {prov.scheme.describe()}, not {scheme.describe()}"
        )
    if ref.j != pop.j:
        raise ProvenanceMismatchError(f"Reference set has {ref.j} covariates, population has {pop.j}")


def assess_with_distribution(
    pop: Population,
    split: SplitSample,
    scheme: SamplingScheme,
    grid: Grid | None = None,
    mode: ReferenceMode | None = None,
    seed: int | None = None,
    *,
    reference: ReferenceSet | None = None,
    exact: bool = False,
    grid_step: float = DEFAULT_GRID_STEP,
    grid_max: float = DEFAULT_GRID_MAX,
    adhoc: Sequence[BalanceConfig] = (),
    threads: int = 1,
) -> tuple[BalanceReport, np.ndarray]:
    """
    Assess one observed split: build (or reuse) the reference set, the ECDF family, the
    pseudo p-value and its standardized version.

    Args:
        pop: The finite population.
        split: The observed split.
        scheme: The ideal sampling scheme the split is judged against.
        grid: Explicit grid; by default a regular grid covering every SMD involved.
        mode: Enumerate or Monte Carlo; defaults to Monte Carlo with 10,000 rounds.
        seed: Monte Carlo seed.
        reference: A prebuilt reference set, checked against `pop` and `scheme`.
        exact: Use the exact candidate set instead of a regular grid.
        adhoc: Ad-hoc cutoffs to report alongside the pseudo p-values.

    Returns:
        The report and the pseudo p-values of all reference splits.
    """
    split.check_bounds(pop.k)
    if split.sizes != scheme.sizes:
        raise InvalidInputError(
            f"Observed split has sizes {split.sizes}, scheme {scheme.describe()} expects {scheme.sizes}"
        )
    observed = smd(pop, split)
    if reference is None:
        reference = build_reference(
            pop, scheme, mode or ReferenceMode.monte_carlo(DEFAULT_ROUNDS), seed, threads
        )
    else:
        check_reference(pop, scheme, reference)

    if exact:
        grid = exact_grid(observed, reference)
    elif grid is None:
        grid = default_grid(observed, reference, grid_step, grid_max)
    fam = ecdf_family(reference, grid, threads)
    p, argmin_delta = pseudo_p(observed, fam)
    dist = random_pseudo_p(reference, fam, threads)
    p_star = standardized_pseudo_p(p, dist)

    summaries = []
    for cfg in adhoc:
        balanced, r_delta = adhoc_assess(observed, cfg)
        summaries.append(
            AdhocSummary(
                delta_cutoff=cfg.delta_cutoff,
                max_imbalanced=cfg.max_imbalanced,
                observed_r=r_delta,
                balanced=balanced,
                reference_accept_rate=adhoc_acceptance_rate(reference, cfg),
            )
        )

    report = BalanceReport(
        p=p,
        p_star=p_star,
        argmin_delta=argmin_delta,
        covariate_names=pop.covariate_names,
        smds=observed.deltas.tolist(),
        smd_summary=five_number_summary(observed.deltas),
        grid_step=grid.step,
        grid_max=grid.max,
        grid_size=grid.size,
        r_profile=r_profile(observed, grid).tolist(),
        reference_size=reference.rows,
        provenance=reference.provenance,
        adhoc=summaries,
    )
    return report, dist


def assess(
    pop: Population,
    split: SplitSample,
    scheme: SamplingScheme,
    grid: Grid | None = None,
    mode: ReferenceMode | None = None,
    seed: int | None = None,
    **kwargs,
) -> BalanceReport:
    """Like `assess_with_distribution`, returning only the report."""
    report, _ = assess_with_distribution(pop, split, scheme, grid, mode, seed, **kwargs)
    return report


## Tests


def test_imbalance_profile_boundary():
    grid = Grid(deltas=[0.1, 0.25, 0.5])
    r = imbalance_profile(np.array([[0.05, 0.25, 0.25], [0.0, 0.0, 0.6]]), grid)
    assert r.tolist() == [[2, 2, 0], [1, 1, 1]]


def test_exact_grid_without_positive_values():
    ref = ReferenceSet.model_construct(smd_rows=np.zeros((3, 2)))
    assert exact_grid(SmdVector(deltas=[0.0, 0.0]), ref).deltas.tolist() == [DEFAULT_GRID_STEP]


def test_standardized_pseudo_p_edges():
    dist = np.array([0.5, 2 / 3, 2 / 3, 1.0])
    assert standardized_pseudo_p(1.0, dist) == 1.0
    assert standardized_pseudo_p(0.1, dist) == 0.0
    assert standardized_pseudo_p(2 / 3, dist) == 0.75
