"""Pydantic models for the design-comparison simulation study."""

from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field, model_validator
from tidylinq import Table

from tidybalance.errors import InvalidInputError
from tidybalance.models.balance_models import ModeKind, ReferenceMode


class StudyDesign(StrEnum):
    """The six study designs compared by the simulation, in their canonical order."""

    randomized = "randomized"
    segregated = "segregated"
    partial = "partial"
    matched = "matched"
    r_partial = "r_partial"
    natural = "natural"

    @property
    def label(self) -> str:
        return DESIGN_LABELS[self]


DESIGN_LABELS = {
    StudyDesign.randomized: "Randomized",
    StudyDesign.segregated: "Segregated",
    StudyDesign.partial: "Partial",
    StudyDesign.matched: "Matched",
    StudyDesign.r_partial: "R_Partial",
    StudyDesign.natural: "Natural",
}


class Scenario(BaseModel):
    """
    One data-generating scenario: population size, arm sizes, bias of the second half,
    and how the SRS reference distribution is obtained.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    k: int = Field(ge=4)
    m_size: int = Field(ge=1)
    n_size: int = Field(ge=1)
    bias: float = Field(default=0.0, ge=0)
    j_dims: int = Field(default=10, ge=1)
    mode: ModeKind = ModeKind.monte_carlo
    rounds: int | None = Field(default=10_000, ge=1)
    partial_first: int = Field(default=1, ge=0)

    @model_validator(mode="after")
    def _check(self) -> Scenario:
        if self.m_size + self.n_size > self.k:
            raise InvalidInputError(
                f"Scenario {self.name}: |M| + |N| = {self.m_size + self.n_size} exceeds K = {self.k}"
            )
        if self.partial_first > self.m_size:
            raise InvalidInputError(
                f"Scenario {self.name}: partial_first={self.partial_first} exceeds |M|={self.m_size}"
            )
        return self

    @property
    def reference_mode(self) -> ReferenceMode:
        if self.mode == ModeKind.enumerate:
            return ReferenceMode.exhaustive()
        return ReferenceMode.monte_carlo(self.rounds or 10_000)


class SimulationRecord(BaseModel):
    """One tidy result row: a design's p and p* in one iteration of one scenario."""

    model_config = ConfigDict(frozen=True)

    scenario: str
    design: StudyDesign
    iteration: int
    p: float
    p_star: float


class SimulationConfig(BaseModel):
    """Contents of a simulation TOML file. Unknown keys are rejected."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(default=2024, ge=0)
    iterations: int = Field(default=1000, ge=1)
    threads: int = Field(default=1, ge=1)
    designs: list[StudyDesign] = Field(default_factory=lambda: list(StudyDesign))
    presets: list[str] = Field(default_factory=list)
    rounds: int | None = Field(
        default=None, ge=1, description="Overrides the Monte Carlo rounds of every scenario"
    )
    scenario: list[Scenario] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> SimulationConfig:
        if not self.presets and not self.scenario:
            raise InvalidInputError("A simulation config needs at least one preset or [[scenario]]")
        if not self.designs:
            raise InvalidInputError("A simulation config needs at least one design")
        return self


@dataclass(frozen=True)
class SimulationResult:
    """Tidy records of a simulation run, plus the scenarios and designs that produced them."""

    scenarios: list[Scenario]
    designs: list[StudyDesign]
    iterations: int
    records: Table[SimulationRecord]

    def for_scenario(self, name: str) -> Table[SimulationRecord]:
        return self.records.where(lambda r: r.scenario == name)


class DesignScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    design: StudyDesign
    p: float
    p_star: float


class BoxplotRow(BaseModel):
    """Five-number summary and 1.5 IQR outliers of one measure for one scenario and design."""

    model_config = ConfigDict(frozen=True)

    scenario: str
    design: StudyDesign
    measure: str
    min: float
    q1: float
    median: float
    q3: float
    max: float
    outliers: list[float]
