"""
Design-comparison simulation: generate populations, draw one split per study design,
score every split against the SRS reference, and aggregate across iterations.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from funlog import log_calls
from tidylinq import Table

from tidybalance.core.balance import five_number_summary, smd
from tidybalance.core.pseudo_p import (
    DEFAULT_GRID_MAX,
    DEFAULT_GRID_STEP,
    default_grid,
    ecdf_family,
    pseudo_p,
    random_pseudo_p,
    standardized_pseudo_p,
)
from tidybalance.core.sampling import build_reference, check_feasible, draw_split
from tidybalance.errors import InvalidInputError
from tidybalance.models.balance_models import (
    ModeKind,
    Population,
    ReferenceSet,
    SamplingScheme,
    SchemeKind,
    SeededRng,
    SplitSample,
)
from tidybalance.models.simulation_models import (
    BoxplotRow,
    DesignScore,
    Scenario,
    SimulationConfig,
    SimulationRecord,
    SimulationResult,
    StudyDesign,
)

logger = logging.getLogger(__name__)

DESIGN_SCHEMES = {
    StudyDesign.randomized: SchemeKind.srs,
    StudyDesign.segregated: SchemeKind.segregated,
    StudyDesign.partial: SchemeKind.partial,
    StudyDesign.matched: SchemeKind.matched,
    StudyDesign.r_partial: SchemeKind.r_partial,
    StudyDesign.natural: SchemeKind.natural,
}

MAX_REGENERATIONS = 100


def _enumeration_presets() -> list[Scenario]:
    # K=20 with arms of 4 (enum-scenario-13..16) has 8,817,900 splits: about 0.7 GB of SMDs
    # per iteration in flight, so keep `threads` low for those presets.
    groups = [(12, 2, 2, 1), (16, 2, 2, 1), (20, 3, 3, 1), (20, 4, 4, 2)]
    presets = []
    for gi, (k, m, n, first) in enumerate(groups):
        for bi, bias in enumerate([0.0, 0.5, 1.0, 2.0]):
            presets.append(
                Scenario(
                    name=f"enum-scenario-{4 * gi + bi + 1}",
                    k=k,
                    m_size=m,
                    n_size=n,
                    bias=bias,
                    mode=ModeKind.enumerate,
                    rounds=None,
                    partial_first=first,
                )
            )
    return presets


def _monte_carlo_presets() -> list[Scenario]:
    settings = [(100, 20, b) for b in (0.0, 0.1, 0.25, 0.5, 0.75)] + [
        (400, 40, b) for b in (0.0, 0.1, 0.25)
    ]
    return [
        Scenario(
            name=f"mc-scenario-{i + 1}",
            k=k,
            m_size=size,
            n_size=size,
            bias=bias,
            mode=ModeKind.monte_carlo,
            rounds=10_000,
            partial_first=8,
        )
        for i, (k, size, bias) in enumerate(settings)
    ]


PRESETS: dict[str, Scenario] = {s.name: s for s in _enumeration_presets() + _monte_carlo_presets()}


def preset(name: str) -> Scenario:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidInputError(
            f"Unknown scenario preset {name!r}; known presets: {', '.join(PRESETS)}"
        ) from None


def resolve_scenarios(config: SimulationConfig) -> list[Scenario]:
    """Presets followed by custom scenarios, with the config's rounds override applied."""
    scenarios = [preset(name) for name in config.presets] + list(config.scenario)
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise InvalidInputError(f"Scenario names must be unique, got {names}")
    if config.rounds is not None:
        scenarios = [
            s.model_copy(update={"rounds": config.rounds}) if s.mode == ModeKind.monte_carlo else s
            for s in scenarios
        ]
    return scenarios


def design_scheme(sc: Scenario, design: StudyDesign) -> SamplingScheme:
    kind = DESIGN_SCHEMES[design]
    return SamplingScheme(
        kind=kind,
        m_size=sc.m_size,
        n_size=sc.n_size,
        partial_first=sc.partial_first if kind == SchemeKind.partial else None,
    )


def generate_population(sc: Scenario, rng: SeededRng | np.random.Generator) -> Population:
    """
    K x J population: the first half i.i.d. N(0, 1), the second half i.i.d. N(bias, 1).
    A draw with a constant column is regenerated.
    """
    gen = rng.generator() if isinstance(rng, SeededRng) else rng
    h = sc.k // 2
    shift = np.zeros((sc.k, 1))
    shift[h:] = sc.bias
    for _attempt in range(MAX_REGENERATIONS):
        values = gen.standard_normal((sc.k, sc.j_dims)) + shift
        if (values.max(axis=0) > values.min(axis=0)).all():
            return Population(
                values=values,
                covariate_names=[f"x{j + 1}" for j in range(sc.j_dims)],
                unit_ids=[f"u{i + 1}" for i in range(sc.k)],
            )
        logger.warning(f"Scenario {sc.name}: generated a constant covariate, regenerating")
    raise InvalidInputError(f"Scenario {sc.name}: could not generate a non-degenerate population")


def assess_designs(
    pop: Population,
    splits: dict[StudyDesign, SplitSample],
    reference: ReferenceSet,
    grid_step: float = DEFAULT_GRID_STEP,
    grid_max: float = DEFAULT_GRID_MAX,
) -> list[DesignScore]:
    """
    Score several observed splits against one shared reference set. The grid covers every
    observed and reference SMD, so each score equals a separate assessment.
    """
    observed = {design: smd(pop, split) for design, split in splits.items()}
    top = max([grid_max] + [v.max() + grid_step for v in observed.values()])
    fam = ecdf_family(reference, default_grid(ref=reference, step=grid_step, upper=top))
    dist = random_pseudo_p(reference, fam)
    scores = []
    for design, vector in observed.items():
        p, _ = pseudo_p(vector, fam)
        scores.append(DesignScore(design=design, p=p, p_star=standardized_pseudo_p(p, dist)))
    return scores


def run_iteration(
    sc: Scenario, designs: list[StudyDesign], seed: int, iteration: int
) -> list[SimulationRecord]:
    """
    One replicate: a fresh population, one split per design (drawn in canonical design
    order), and an SRS reference built once and shared by all designs.
    """
    rng = SeededRng(seed=seed, stream_id=iteration)
    gen = rng.generator()
    pop = generate_population(sc, gen)
    splits = {
        design: draw_split(pop, design_scheme(sc, design), gen)
        for design in StudyDesign
        if design in designs
    }
    reference = build_reference(
        pop,
        design_scheme(sc, StudyDesign.randomized),
        sc.reference_mode,
        seed=rng.child(0).seed,
    )
    return [
        SimulationRecord(
            scenario=sc.name, design=s.design, iteration=iteration, p=s.p, p_star=s.p_star
        )
        for s in assess_designs(pop, splits, reference)
    ]


@log_calls(level="info", show_timing_only=True)
def run_scenario(
    sc: Scenario,
    iterations: int,
    seed: int,
    designs: list[StudyDesign] | None = None,
    threads: int = 1,
) -> SimulationResult:
    """Replicate a scenario. Iteration `i` uses random stream `(seed, i)` whatever `threads` is."""
    designs = designs or list(StudyDesign)
    for design in designs:
        check_feasible(sc.k, design_scheme(sc, design))
    logger.info(f"Running {sc.name} for {iterations} iterations")

    def one(iteration: int) -> list[SimulationRecord]:
        return run_iteration(sc, designs, seed, iteration)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        batches = list(pool.map(one, range(iterations)))
    records = [record for batch in batches for record in batch]
    return SimulationResult(
        scenarios=[sc],
        designs=designs,
        iterations=iterations,
        records=Table.from_rows(records, SimulationRecord),
    )


def run_simulation(config: SimulationConfig) -> SimulationResult:
    """Run every scenario of a config and merge the tidy records."""
    scenarios = resolve_scenarios(config)
    designs = [d for d in StudyDesign if d in config.designs]
    records: list[SimulationRecord] = []
    for sc in scenarios:
        result = run_scenario(sc, config.iterations, config.seed, designs, config.threads)
        records.extend(result.records.to_list())
    return SimulationResult(
        scenarios=scenarios,
        designs=designs,
        iterations=config.iterations,
        records=Table.from_rows(records, SimulationRecord),
    )


DesignShares = dict[str, dict[StudyDesign, float]]


def _by_iteration(records: Table[SimulationRecord]) -> dict[int, list[SimulationRecord]]:
    grouped: dict[int, list[SimulationRecord]] = defaultdict(list)
    for record in records.to_list():
        grouped[record.iteration].append(record)
    return grouped


def best_design_shares(res: SimulationResult) -> DesignShares:
    """
    Per scenario, the share of iterations in which each design has the largest p.
    Tied designs split the iteration equally, so each scenario's shares sum to 1.
    """
    shares: DesignShares = {}
    for sc in res.scenarios:
        totals = dict.fromkeys(res.designs, 0.0)
        grouped = _by_iteration(res.for_scenario(sc.name))
        for records in grouped.values():
            best = max(r.p for r in records)
            winners = [r.design for r in records if r.p == best]
            for design in winners:
                totals[design] += 1 / len(winners)
        count = len(grouped) or 1
        shares[sc.name] = {design: total / count for design, total in totals.items()}
    return shares


def threshold_shares(
    res: SimulationResult, p_cut: float = 0.05, p_star_cut: float = 0.20
) -> tuple[DesignShares, DesignShares]:
    """Per scenario and design, the shares of iterations with p < p_cut and with p* < p_star_cut."""
    below_p: DesignShares = {}
    below_p_star: DesignShares = {}
    for sc in res.scenarios:
        below_p[sc.name] = {}
        below_p_star[sc.name] = {}
        records = res.for_scenario(sc.name)
        for design in res.designs:
            rows = records.where(lambda r, d=design: r.design == d)
            count = rows.count() or 1
            below_p[sc.name][design] = rows.where(lambda r: r.p < p_cut).count() / count
            below_p_star[sc.name][design] = (
                rows.where(lambda r: r.p_star < p_star_cut).count() / count
            )
    return below_p, below_p_star


def boxplot_summary(res: SimulationResult) -> list[BoxplotRow]:
    rows = []
    for sc in res.scenarios:
        records = res.for_scenario(sc.name)
        for design in res.designs:
            chosen = records.where(lambda r, d=design: r.design == d).to_list()
            if not chosen:
                continue
            for measure in ("p", "p_star"):
                values = np.array([getattr(r, measure) for r in chosen])
                s = five_number_summary(values)
                fence = 1.5 * (s.q3 - s.q1)
                outliers = values[(values < s.q1 - fence) | (values > s.q3 + fence)]
                rows.append(
                    BoxplotRow(
                        scenario=sc.name,
                        design=design,
                        measure=measure,
                        outliers=sorted(outliers.tolist()),
                        **s.model_dump(),
                    )
                )
    return rows


## Tests


def test_presets_follow_scenario_table():
    assert len(PRESETS) == 24
    assert preset("enum-scenario-6").k == 16 and preset("enum-scenario-6").bias == 0.5
    assert preset("enum-scenario-13").partial_first == 2
    assert preset("mc-scenario-8").k == 400 and preset("mc-scenario-8").bias == 0.25
    for sc in PRESETS.values():
        for design in StudyDesign:
            check_feasible(sc.k, design_scheme(sc, design))
