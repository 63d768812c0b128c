"""
Producing splits from a population: exhaustive enumeration, seeded Monte Carlo draws
for every sampling scheme, and reference sets of SMDs built from either.

Indices are 0-based. "First half" means indices `0 .. K // 2 - 1`; an odd K puts the
extra unit in the second half.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from itertools import chain, combinations

import numpy as np
from funlog import log_calls

from tidybalance.core.balance import smd_kernel
from tidybalance.errors import EnumerationCapError, InfeasibleSchemeError, InvalidInputError
from tidybalance.models.balance_models import (
    ModeKind,
    Population,
    ReferenceMode,
    ReferenceProvenance,
    ReferenceSet,
    SamplingScheme,
    SchemeKind,
    SeededRng,
    SplitSample,
)

logger = logging.getLogger(__name__)

ENUMERATION_CAP = 10_000_000
"""Largest number of splits `enumerate_scheme` will materialize."""

MC_CHUNK_ROUNDS = 4096
"""Monte Carlo rounds per random substream. Fixed so output does not depend on threads."""

ENUM_BLOCK_ROWS = 1 << 16
"""Splits per block when streaming an exhaustive enumeration."""

FEW_ROUNDS = 1000


def first_half(k: int) -> int:
    return k // 2


def check_feasible(k: int, scheme: SamplingScheme) -> None:
    """Raise `InfeasibleSchemeError` if `scheme` cannot draw splits of its sizes from K units."""
    m, n = scheme.sizes
    h = first_half(k)
    rest = k - h
    match scheme.kind:
        case SchemeKind.srs:
            ok = m + n <= k
        case SchemeKind.segregated:
            ok = n <= h and m <= rest
        case SchemeKind.partial:
            f = scheme.partial_first or 0
            ok = n + f <= h and m - f <= rest
        case SchemeKind.matched:
            ok = m + n <= h
        case SchemeKind.r_partial:
            # Any first-half share 0..|M| may be drawn.
            ok = n + m <= h and m <= rest
        case SchemeKind.natural:
            ok = n <= h and m <= k - n
        case SchemeKind.cluster:
            _check_clusters(k, scheme)
            ok = True
    if not ok:
        raise InfeasibleSchemeError(f"Scheme {scheme.describe()} is infeasible for K = {k}")


def _check_clusters(k: int, scheme: SamplingScheme) -> None:
    clusters = scheme.clusters or ()
    seen: set[int] = set()
    for cluster in clusters:
        if any(i < 0 or i >= k for i in cluster):
            raise InvalidInputError(f"Cluster {list(cluster)} has indices outside 0..{k - 1}")
        if seen & set(cluster):
            raise InvalidInputError("Clusters must be disjoint")
        seen |= set(cluster)
        if len(cluster) < scheme.m_size + scheme.n_size:
            raise InfeasibleSchemeError(
                f"Cluster {list(cluster)} has fewer than |M| + |N| = "
                f"{scheme.m_size + scheme.n_size} units"
            )


def _cluster_counts(scheme: SamplingScheme) -> list[int]:
    m, n = scheme.sizes
    return [math.comb(len(c), m) * math.comb(len(c) - m, n) for c in scheme.clusters or ()]


def enumeration_size(k: int, scheme: SamplingScheme) -> int:
    """Number of rows `enumerate_scheme` produces (cluster rows include replication)."""
    check_feasible(k, scheme)
    m, n = scheme.sizes
    h = first_half(k)
    match scheme.kind:
        case SchemeKind.srs:
            return math.comb(k, m) * math.comb(k - m, n)
        case SchemeKind.segregated:
            return math.comb(h, n) * math.comb(k - h, m)
        case SchemeKind.partial:
            f = scheme.partial_first or 0
            return math.comb(h, f) * math.comb(h - f, n) * math.comb(k - h, m - f)
        case SchemeKind.matched:
            return math.comb(h, m) * math.comb(h - m, n)
        case SchemeKind.natural:
            return math.comb(h, n) * math.comb(k - n, m)
        case SchemeKind.cluster:
            counts = _cluster_counts(scheme)
            return math.lcm(*counts) * len(counts)
        case SchemeKind.r_partial:
            raise InfeasibleSchemeError(
                "r_partial splits are not equally likely and cannot be enumerated; use Monte Carlo"
            )


def _check_cap(size: int, cap: int) -> None:
    if size > cap:
        raise EnumerationCapError(
            f"Enumeration would produce {size:,} splits, above the cap of {cap:,}; "
            "use Monte Carlo mode instead"
        )


def enumerate_splits(
    k: int, m_size: int, n_size: int, cap: int = ENUMERATION_CAP
) -> Iterator[SplitSample]:
    """
    Every ordered pair of disjoint index sets (M first, then N from the remainder), each
    exactly once, in lexicographic order.
    """
    scheme = SamplingScheme(m_size=m_size, n_size=n_size)
    _check_cap(enumeration_size(k, scheme), cap)

    def splits() -> Iterator[SplitSample]:
        for m in combinations(range(k), m_size):
            taken = set(m)
            rest = [i for i in range(k) if i not in taken]
            for n in combinations(rest, n_size):
                yield SplitSample(m_indices=m, n_indices=n)

    return splits()


def _combos(pool: np.ndarray, size: int) -> np.ndarray:
    count = math.comb(len(pool), size)
    flat = np.fromiter(
        chain.from_iterable(combinations(pool.tolist(), size)), dtype=np.intp, count=count * size
    )
    return flat.reshape(count, size)


def _dependent_pairs(
    first: np.ndarray, pool: np.ndarray, size: int, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """
    Pair every row of `first` with every `size`-subset of `pool` minus that row's units.
    Rows of `first` must lie inside `pool`.
    """
    rows = len(first)
    mask = np.zeros((rows, k), dtype=bool)
    mask[:, pool] = True
    mask[np.arange(rows)[:, None], first] = False
    remaining = np.nonzero(mask)[1].reshape(rows, len(pool) - first.shape[1])
    positions = _combos(np.arange(remaining.shape[1]), size)
    second = remaining[:, positions].reshape(-1, size)
    return np.repeat(first, len(positions), axis=0), second


def _pair_blocks(
    first: np.ndarray, pool: np.ndarray, size: int, k: int, fanout: int = 1
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """`_dependent_pairs` over consecutive slices of `first`, about `ENUM_BLOCK_ROWS` rows each."""
    per_row = math.comb(len(pool) - first.shape[1], size) * fanout
    step = max(1, ENUM_BLOCK_ROWS // max(per_row, 1))
    for start in range(0, len(first), step):
        yield _dependent_pairs(first[start : start + step], pool, size, k)


def _product(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.repeat(a, len(b), axis=0), np.tile(b, (len(a), 1))


def _scheme_blocks(k: int, scheme: SamplingScheme) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    m, n = scheme.sizes
    everyone = np.arange(k)
    first = np.arange(first_half(k))
    second = np.arange(first_half(k), k)
    match scheme.kind:
        case SchemeKind.srs:
            yield from _pair_blocks(_combos(everyone, m), everyone, n, k)
        case SchemeKind.matched:
            yield from _pair_blocks(_combos(first, m), first, n, k)
        case SchemeKind.segregated:
            n_rows = _combos(first, n)
            m_rows = _combos(second, m)
            step = max(1, ENUM_BLOCK_ROWS // len(n_rows))
            for start in range(0, len(m_rows), step):
                yield _product(m_rows[start : start + step], n_rows)
        case SchemeKind.natural:
            for n_rows, m_rows in _pair_blocks(_combos(first, n), everyone, m, k):
                yield m_rows, n_rows
        case SchemeKind.partial:
            f = scheme.partial_first or 0
            m_second = _combos(second, m - f)
            for m_first, n_rows in _pair_blocks(_combos(first, f), first, n, k, len(m_second)):
                picked = np.arange(len(m_first))
                pair_idx, m_rest = _product(picked[:, None], m_second)
                pair_idx = pair_idx[:, 0]
                m_rows = np.sort(np.hstack([m_first[pair_idx], m_rest]), axis=1)
                yield m_rows, n_rows[pair_idx]
        case SchemeKind.cluster:
            counts = _cluster_counts(scheme)
            weight = math.lcm(*counts)
            for cluster, count in zip(scheme.clusters or (), counts, strict=True):
                pool = np.array(sorted(cluster))
                for _copy in range(weight // count):
                    yield from _pair_blocks(_combos(pool, m), pool, n, k)
        case _:
            raise InfeasibleSchemeError(f"Cannot enumerate scheme {scheme.describe()}")


def enumerate_blocks(
    k: int, scheme: SamplingScheme, cap: int = ENUMERATION_CAP
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """
    The rows of `enumerate_scheme`, in the same order, as consecutive `(M rows, N rows)`
    blocks of at most about `ENUM_BLOCK_ROWS` splits. Size and cap are checked up front.
    """
    _check_cap(enumeration_size(k, scheme), cap)
    return _scheme_blocks(k, scheme)


def enumerate_scheme(
    k: int, scheme: SamplingScheme, cap: int = ENUMERATION_CAP
) -> tuple[np.ndarray, np.ndarray]:
    """
    All splits of an equally weighted scheme as index matrices `(M rows, N rows)`.

    Every row has the same probability under the scheme. For `cluster`, each cluster's
    splits are repeated so all clusters carry the same total weight. SRS rows come in
    lexicographic order (M first, then N).
    """
    blocks = list(enumerate_blocks(k, scheme, cap))
    return np.vstack([b[0] for b in blocks]), np.vstack([b[1] for b in blocks])


def _sample_rows(
    gen: np.random.Generator,
    rounds: int,
    pool_size: int,
    count: int,
    exclude: np.ndarray | None = None,
) -> np.ndarray:
    """
    `rounds` independent uniformly random ordered samples of `count` items from
    `range(pool_size)` without replacement, via the smallest random keys. Columns of
    `exclude` are never picked.
    """
    keys = gen.random((rounds, pool_size))
    if exclude is not None and exclude.shape[1]:
        np.put_along_axis(keys, exclude, 2.0, axis=1)
    if count == 0:
        return np.empty((rounds, 0), dtype=np.intp)
    if count < pool_size:
        picked = np.argpartition(keys, count - 1, axis=1)[:, :count]
    else:
        picked = np.tile(np.arange(pool_size), (rounds, 1))
    order = np.argsort(np.take_along_axis(keys, picked, axis=1), axis=1)
    return np.take_along_axis(picked, order, axis=1)


def draw_split_arrays(
    k: int, scheme: SamplingScheme, rounds: int, gen: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw `rounds` independent splits as `(M rows, N rows)` index matrices."""
    m, n = scheme.sizes
    h = first_half(k)
    match scheme.kind:
        case SchemeKind.srs:
            s = _sample_rows(gen, rounds, k, m + n)
            return s[:, :m], s[:, m:]
        case SchemeKind.matched:
            s = _sample_rows(gen, rounds, h, m + n)
            return s[:, :m], s[:, m:]
        case SchemeKind.segregated:
            n_rows = _sample_rows(gen, rounds, h, n)
            return h + _sample_rows(gen, rounds, k - h, m), n_rows
        case SchemeKind.partial:
            f = scheme.partial_first or 0
            s = _sample_rows(gen, rounds, h, f + n)
            m_second = h + _sample_rows(gen, rounds, k - h, m - f)
            return np.hstack([s[:, :f], m_second]), s[:, f:]
        case SchemeKind.r_partial:
            f = gen.binomial(m, 0.5, size=rounds)
            s = _sample_rows(gen, rounds, h, n + m)
            m_second = h + _sample_rows(gen, rounds, k - h, m)
            j = np.arange(m)[None, :]
            from_first = s[:, n:]
            from_second = np.take_along_axis(m_second, np.clip(j - f[:, None], 0, m - 1), axis=1)
            return np.where(j < f[:, None], from_first, from_second), s[:, :n]
        case SchemeKind.natural:
            n_rows = _sample_rows(gen, rounds, h, n)
            return _sample_rows(gen, rounds, k, m, exclude=n_rows), n_rows
        case SchemeKind.cluster:
            clusters = [np.array(sorted(c)) for c in scheme.clusters or ()]
            chosen = gen.integers(len(clusters), size=rounds)
            m_rows = np.empty((rounds, m), dtype=np.intp)
            n_rows = np.empty((rounds, n), dtype=np.intp)
            for ci, pool in enumerate(clusters):
                rows = np.flatnonzero(chosen == ci)
                s = pool[_sample_rows(gen, len(rows), len(pool), m + n)]
                m_rows[rows] = s[:, :m]
                n_rows[rows] = s[:, m:]
            return m_rows, n_rows
    raise InfeasibleSchemeError(f"Cannot draw from scheme {scheme.describe()}")


def draw_split(
    pop: Population, scheme: SamplingScheme, rng: SeededRng | np.random.Generator
) -> SplitSample:
    """Draw one split of `pop` under `scheme`."""
    check_feasible(pop.k, scheme)
    gen = rng.generator() if isinstance(rng, SeededRng) else rng
    m_rows, n_rows = draw_split_arrays(pop.k, scheme, 1, gen)
    return SplitSample(m_indices=m_rows[0], n_indices=n_rows[0])


def cluster_draw(
    pop: Population,
    partition: Sequence[Sequence[int]],
    sizes: tuple[int, int],
    rng: SeededRng | np.random.Generator,
) -> SplitSample:
    """Pick one cluster uniformly, then draw disjoint M and N inside it."""
    scheme = SamplingScheme(
        kind=SchemeKind.cluster,
        m_size=sizes[0],
        n_size=sizes[1],
        clusters=tuple(tuple(int(i) for i in c) for c in partition),
    )
    return draw_split(pop, scheme, rng)


def _smd_rows(
    pop: Population, m_rows: np.ndarray, n_rows: np.ndarray, threads: int
) -> np.ndarray:
    starts = range(0, len(m_rows), MC_CHUNK_ROUNDS)

    def chunk(start: int) -> np.ndarray:
        end = start + MC_CHUNK_ROUNDS
        return smd_kernel(pop, m_rows[start:end], n_rows[start:end])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.vstack(list(pool.map(chunk, starts)))


def fresh_seed() -> int:
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])


@log_calls(level="info", show_timing_only=True)
def build_reference(
    pop: Population,
    scheme: SamplingScheme,
    mode: ReferenceMode,
    seed: int | None = None,
    threads: int = 1,
    cap: int = ENUMERATION_CAP,
) -> ReferenceSet:
    """
    SMD vectors of every split of `scheme` (enumerate mode) or of `mode.rounds`
    independent draws (Monte Carlo mode).

    Enumerated splits are streamed in blocks of `ENUM_BLOCK_ROWS`; only the SMD matrix
    (rows x J float64) is held in full.

    Monte Carlo rounds are drawn in fixed-size chunks, chunk `i` from the Philox stream
    keyed `(seed, i)`; rows are ordered by round, so the result depends on the seed only,
    never on `threads`. A missing seed is drawn from OS entropy and recorded.
    """
    check_feasible(pop.k, scheme)
    if threads < 1:
        raise InvalidInputError(f"threads must be at least 1, got {threads}")

    if mode.kind == ModeKind.enumerate:
        blocks = enumerate_blocks(pop.k, scheme, cap)
        rows = np.empty((enumeration_size(pop.k, scheme), pop.j))
        start = 0
        for m_rows, n_rows in blocks:
            rows[start : start + len(m_rows)] = _smd_rows(pop, m_rows, n_rows, threads)
            start += len(m_rows)
        seed = None
    else:
        rounds = mode.rounds or 0
        if rounds < FEW_ROUNDS:
            logger.warning(
                f"Monte Carlo reference with only {rounds} rounds; p-value resolution is 1/{rounds}"
            )
        if seed is None:
            seed = fresh_seed()
            logger.info(f"No seed given, using seed {seed}")
        base = SeededRng(seed=seed)

        def chunk(index: int) -> np.ndarray:
            size = min(MC_CHUNK_ROUNDS, rounds - index * MC_CHUNK_ROUNDS)
            gen = base.substream(index).generator()
            m_rows, n_rows = draw_split_arrays(pop.k, scheme, size, gen)
            logger.debug(f"Reference chunk {index}: {size} rounds")
            return smd_kernel(pop, m_rows, n_rows)

        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = np.vstack(list(pool.map(chunk, range(math.ceil(rounds / MC_CHUNK_ROUNDS)))))

    logger.info(f"Built reference of {len(rows)} splits for {scheme.describe()} ({mode.kind.value})")
    return ReferenceSet(
        smd_rows=rows,
        provenance=ReferenceProvenance(
            scheme=scheme, mode=mode, seed=seed, population_hash=pop.content_hash
        ),
    )


## Tests


def test_enumeration_counts():
    assert len(list(enumerate_splits(4, 1, 1))) == 12
    assert enumeration_size(12, SamplingScheme(m_size=2, n_size=2)) == 2970
    try:
        enumerate_splits(3, 2, 2)
    except InfeasibleSchemeError:
        pass
    else:
        raise AssertionError("Expected an infeasible scheme error")


def test_enumerate_scheme_matches_generator():
    m_rows, n_rows = enumerate_scheme(5, SamplingScheme(m_size=2, n_size=1))
    listed = [(s.m_indices, s.n_indices) for s in enumerate_splits(5, 2, 1)]
    arrays = [(tuple(a), tuple(b)) for a, b in zip(m_rows.tolist(), n_rows.tolist(), strict=True)]
    assert arrays == listed
