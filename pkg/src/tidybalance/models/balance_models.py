"""Pydantic models for populations, splits, reference sets and balance reports."""

from __future__ import annotations

import hashlib
import math
from enum import StrEnum
from functools import cached_property
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from tidybalance.errors import InvalidInputError, ZeroVarianceError

ARRAY_MODEL = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class Population(BaseModel):
    """
    The finite universe of K experimental units with J real covariates each.

    `values` is K x J. The SMD kernel reads `columns`, a covariate-major J x K copy, so
    each covariate is scanned contiguously. Constant columns are rejected at construction
    because the SMD divides by the population standard deviation.
    """

    model_config = ARRAY_MODEL

    values: np.ndarray
    covariate_names: list[str]
    unit_ids: list[str]

    @field_validator("values", mode="before")
    @classmethod
    def _as_matrix(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 2:
            raise InvalidInputError(f"Population values must be a K x J matrix, got shape {arr.shape}")
        return _readonly(arr)

    @model_validator(mode="after")
    def _check(self) -> Population:
        k, j = self.values.shape
        if k < 2 or j < 1:
            raise InvalidInputError(f"Population needs K >= 2 units and J >= 1 covariates, got {k} x {j}")
        if len(self.covariate_names) != j:
            raise InvalidInputError(f"Expected {j} covariate names, got {len(self.covariate_names)}")
        if len(self.unit_ids) != k:
            raise InvalidInputError(f"Expected {k} unit ids, got {len(self.unit_ids)}")
        if len(set(self.unit_ids)) != k:
            raise InvalidInputError("Unit ids must be unique")
        if not np.isfinite(self.values).all():
            raise InvalidInputError("Population values must be finite (no missing entries)")
        constant = self.values.max(axis=0) == self.values.min(axis=0)
        if constant.any():
            raise ZeroVarianceError([self.covariate_names[i] for i in np.flatnonzero(constant)])
        return self

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def j(self) -> int:
        return self.values.shape[1]

    @cached_property
    def columns(self) -> np.ndarray:
        return _readonly(np.ascontiguousarray(self.values.T))

    @cached_property
    def means(self) -> np.ndarray:
        return _readonly(self.columns.mean(axis=1))

    @cached_property
    def sds(self) -> np.ndarray:
        """Population SDs with the K - 1 denominator."""
        return _readonly(self.columns.std(axis=1, ddof=1))

    @cached_property
    def content_hash(self) -> str:
        """SHA-256 over values, covariate names and unit ids; ties cached references to data."""
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        digest.update("\x1f".join(self.covariate_names).encode())
        digest.update(b"\x1e")
        digest.update("\x1f".join(self.unit_ids).encode())
        return digest.hexdigest()


class SplitSample(BaseModel):
    """
    Two disjoint arms of population indices (0-based). Index tuples are kept sorted so
    equal splits compare equal.
    """

    model_config = ConfigDict(frozen=True)

    m_indices: tuple[int, ...]
    n_indices: tuple[int, ...]

    @field_validator("m_indices", "n_indices", mode="before")
    @classmethod
    def _sorted_unique(cls, v: Any) -> tuple[int, ...]:
        items = [int(i) for i in v]
        if not items:
            raise InvalidInputError("Both arms of a split must be nonempty")
        if len(set(items)) != len(items):
            raise InvalidInputError(f"Duplicate index within an arm: {items}")
        if min(items) < 0:
            raise InvalidInputError(f"Negative population index in {items}")
        return tuple(sorted(items))

    @model_validator(mode="after")
    def _disjoint(self) -> SplitSample:
        overlap = set(self.m_indices) & set(self.n_indices)
        if overlap:
            raise InvalidInputError(f"Arms overlap on indices {sorted(overlap)}")
        return self

    @property
    def sizes(self) -> tuple[int, int]:
        return len(self.m_indices), len(self.n_indices)

    def check_bounds(self, k: int) -> None:
        top = max(max(self.m_indices), max(self.n_indices))
        if top >= k:
            raise InvalidInputError(f"Split index {top} out of range for a population of {k}")

    def swapped(self) -> SplitSample:
        return SplitSample(m_indices=self.n_indices, n_indices=self.m_indices)


class SmdVector(BaseModel):
    """Non-directional standardized mean differences, one per covariate."""

    model_config = ARRAY_MODEL

    deltas: np.ndarray

    @field_validator("deltas", mode="before")
    @classmethod
    def _check(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidInputError("SMD vector must be one-dimensional and nonempty")
        if not np.isfinite(arr).all() or (arr < 0).any():
            raise InvalidInputError("SMD entries must be finite and non-negative")
        return _readonly(arr)

    @property
    def j(self) -> int:
        return self.deltas.size

    def max(self) -> float:
        return float(self.deltas.max())


class BalanceConfig(BaseModel):
    """Cutoffs of the ad-hoc procedure: balanced when at most `max_imbalanced` SMDs reach `delta_cutoff`."""

    model_config = ConfigDict(frozen=True)

    delta_cutoff: float = Field(gt=0)
    max_imbalanced: int = Field(ge=0)


class ApproxQuery(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=1)
    m: int = Field(ge=1)
    delta: float = Field(gt=0)
    j_dims: int = Field(ge=1)
    r_max: int = Field(ge=0)


class SchemeKind(StrEnum):
    """
    Sampling schemes. `srs` is simple random sampling without replacement; the halves
    based schemes split the population at index K // 2 (the extra unit of an odd K goes
    to the second half).
    """

    srs = "srs"
    cluster = "cluster"
    segregated = "segregated"
    partial = "partial"
    matched = "matched"
    r_partial = "r_partial"
    natural = "natural"


class SamplingScheme(BaseModel):
    """
    A way of drawing (M, N) of fixed sizes. `partial_first` is the number of M units
    drawn from the first half by `partial`; `clusters` is the partition used by `cluster`.
    """

    model_config = ConfigDict(frozen=True)

    kind: SchemeKind = SchemeKind.srs
    m_size: int = Field(ge=1)
    n_size: int = Field(ge=1)
    partial_first: int | None = Field(default=None, ge=0)
    clusters: tuple[tuple[int, ...], ...] | None = None

    @model_validator(mode="after")
    def _check(self) -> SamplingScheme:
        if self.kind == SchemeKind.partial:
            if self.partial_first is None:
                raise InvalidInputError("The partial scheme needs `partial_first`")
            if self.partial_first > self.m_size:
                raise InvalidInputError(
                    f"partial_first={self.partial_first} exceeds |M|={self.m_size}"
                )
        if self.kind == SchemeKind.cluster and not self.clusters:
            raise InvalidInputError("The cluster scheme needs a partition in `clusters`")
        return self

    @property
    def sizes(self) -> tuple[int, int]:
        return self.m_size, self.n_size

    def describe(self) -> str:
        extra = ""
        if self.kind == SchemeKind.partial:
            extra = f", first={self.partial_first}"
        elif self.kind == SchemeKind.cluster:
            extra = f", clusters={len(self.clusters or ())}"
        return f"{self.kind.value}(|M|={self.m_size}, |N|={self.n_size}{extra})"


class SeededRng(BaseModel):
    """
    Counter-based random stream keyed by `(seed, stream_id)`.

    Philox is keyed directly by the pair, so a given key yields the same draws on every
    platform and independently of which thread consumes it.
    """

    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, lt=2**64)
    stream_id: int = Field(default=0, ge=0, lt=2**64)

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, stream_id: int) -> SeededRng:
        return SeededRng(seed=self.seed, stream_id=stream_id)

    def child(self, stream: int) -> SeededRng:
        """Derive an independent seed, e.g. for a reference set nested inside an iteration."""
        state = np.random.SeedSequence([self.seed, self.stream_id, stream]).generate_state(
            1, dtype=np.uint64
        )
        return SeededRng(seed=int(state[0]))


class ModeKind(StrEnum):
    enumerate = "enumerate"
    monte_carlo = "monte_carlo"


class ReferenceMode(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ModeKind = ModeKind.monte_carlo
    rounds: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check(self) -> ReferenceMode:
        if self.kind == ModeKind.monte_carlo and self.rounds is None:
            raise InvalidInputError("Monte Carlo mode needs a number of rounds")
        return self

    @classmethod
    def exhaustive(cls) -> ReferenceMode:
        return cls(kind=ModeKind.enumerate)

    @classmethod
    def monte_carlo(cls, rounds: int) -> ReferenceMode:
        return cls(kind=ModeKind.monte_carlo, rounds=rounds)


class Grid(BaseModel):
    """
    Strictly increasing positive cutoffs at which R^delta is evaluated. `step` is the
    spacing of a regular grid, or None for an exact candidate set.
    """

    model_config = ARRAY_MODEL

    deltas: np.ndarray
    step: float | None = None

    @field_validator("deltas", mode="before")
    @classmethod
    def _check(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidInputError("Grid must be a nonempty one-dimensional sequence")
        if not np.isfinite(arr).all() or (arr <= 0).any():
            raise InvalidInputError("Grid entries must be finite and positive")
        if (np.diff(arr) <= 0).any():
            raise InvalidInputError("Grid entries must be strictly increasing")
        return _readonly(arr)

    @classmethod
    def regular(cls, step: float, upper: float) -> Grid:
        """`step, 2 * step, ...` up to the first multiple of `step` at or above `upper`."""
        if step <= 0 or upper <= 0:
            raise InvalidInputError(f"Grid step and upper bound must be positive, got {step}, {upper}")
        count = max(1, math.ceil(upper / step - 1e-9))
        return cls(deltas=np.round(step * np.arange(1, count + 1), 12), step=step)

    @property
    def size(self) -> int:
        return self.deltas.size

    @property
    def max(self) -> float:
        return float(self.deltas[-1])

    def refined(self, extra: np.ndarray) -> Grid:
        """Union with additional positive cutoffs; the result is an exact (irregular) grid."""
        extra = np.asarray(extra, dtype=np.float64)
        return Grid(deltas=np.union1d(self.deltas, extra[extra > 0]))


class ReferenceProvenance(BaseModel):
    model_config = ConfigDict(frozen=True)

    scheme: SamplingScheme
    mode: ReferenceMode
    seed: int | None = None
    population_hash: str


class ReferenceSet(BaseModel):
    """SMD vectors of every enumerated or Monte Carlo split of the ideal scheme, one row each."""

    model_config = ARRAY_MODEL

    smd_rows: np.ndarray
    provenance: ReferenceProvenance

    @field_validator("smd_rows", mode="before")
    @classmethod
    def _check(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError("A reference set needs at least one row of SMDs")
        if not np.isfinite(arr).all() or (arr < 0).any():
            raise InvalidInputError("Reference SMDs must be finite and non-negative")
        return _readonly(arr)

    @property
    def rows(self) -> int:
        return self.smd_rows.shape[0]

    @property
    def j(self) -> int:
        return self.smd_rows.shape[1]

    def max(self) -> float:
        return float(self.smd_rows.max())


class EcdfFamily(BaseModel):
    """
    For every grid cutoff, the distribution of R^delta over the reference set:
    `counts[g, a]` is the number of reference splits with exactly `a` imbalanced
    covariates at `grid.deltas[g]`.
    """

    model_config = ARRAY_MODEL

    grid: Grid
    counts: np.ndarray
    total: int

    @model_validator(mode="after")
    def _check(self) -> EcdfFamily:
        if self.counts.shape[0] != self.grid.size:
            raise InvalidInputError("One count row is needed per grid cutoff")
        if (self.counts.sum(axis=1) != self.total).any():
            raise InvalidInputError("Every count row must sum to the reference size")
        return self

    @property
    def j(self) -> int:
        return self.counts.shape[1] - 1

    @cached_property
    def cumulative(self) -> np.ndarray:
        """`cumulative[g, a + 1]` counts splits with R <= a; column 0 is zero."""
        cum = np.zeros((self.grid.size, self.j + 2), dtype=np.int64)
        np.cumsum(self.counts, axis=1, out=cum[:, 1:])
        return _readonly(cum)

    def grid_index(self, delta: float) -> int:
        g = int(np.searchsorted(self.grid.deltas, delta))
        if g >= self.grid.size or not np.isclose(self.grid.deltas[g], delta, rtol=0, atol=1e-12):
            raise InvalidInputError(f"delta={delta} is not a point of the grid")
        return g

    def cdf(self, delta: float, a: int) -> float:
        """F_delta(a) = P(R^delta <= a) over the reference splits."""
        g = self.grid_index(delta)
        if a < 0:
            return 0.0
        if a >= self.j:
            return 1.0
        return float(self.cumulative[g, a + 1] / self.total)

    def tail_counts(self, r: np.ndarray) -> np.ndarray:
        """
        Number of reference splits with R^delta >= r, for an array of observed counts
        whose last axis runs over the grid. Equals `total * (1 - F_delta(r - 1))`.
        """
        r = np.asarray(r)
        return self.total - self.cumulative[np.arange(self.grid.size), r]


class FiveNumberSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    min: float
    q1: float
    median: float
    q3: float
    max: float


class AdhocSummary(BaseModel):
    """Ad-hoc verdict for the observed split next to the share of reference splits it accepts."""

    model_config = ConfigDict(frozen=True)

    delta_cutoff: float
    max_imbalanced: int
    observed_r: int
    balanced: bool
    reference_accept_rate: float


class BalanceReport(BaseModel):
    """
    Result of assessing one observed split. `p_star` is stored on the [0, 1] scale;
    human-readable output shows it as a percentage.
    """

    model_config = ConfigDict(frozen=True)

    p: float = Field(ge=0, le=1)
    p_star: float = Field(ge=0, le=1)
    argmin_delta: float
    covariate_names: list[str]
    smds: list[float]
    smd_summary: FiveNumberSummary
    grid_step: float | None
    grid_max: float
    grid_size: int
    r_profile: list[int]
    reference_size: int
    provenance: ReferenceProvenance
    adhoc: list[AdhocSummary] = Field(default_factory=list)

    def to_row(self) -> dict[str, Any]:
        """Flat record for CSV output."""
        row: dict[str, Any] = {
            "p": self.p,
            "p_star": self.p_star,
            "argmin_delta": self.argmin_delta,
            "smd_min": self.smd_summary.min,
            "smd_q1": self.smd_summary.q1,
            "smd_median": self.smd_summary.median,
            "smd_q3": self.smd_summary.q3,
            "smd_max": self.smd_summary.max,
            "grid_step": self.grid_step,
            "grid_max": self.grid_max,
            "reference_size": self.reference_size,
            "scheme": self.provenance.scheme.kind.value,
            "m_size": self.provenance.scheme.m_size,
            "n_size": self.provenance.scheme.n_size,
            "mode": self.provenance.mode.kind.value,
            "rounds": self.provenance.mode.rounds,
            "seed": self.provenance.seed,
            "population_hash": self.provenance.population_hash,
        }
        for name, value in zip(self.covariate_names, self.smds, strict=True):
            row[f"smd_{name}"] = value
        return row
