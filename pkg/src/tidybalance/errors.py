"""Exceptions raised by tidybalance."""


class BalanceError(Exception):
    """
    Base class for all tidybalance errors.

    Not a `ValueError` subclass: pydantic wraps `ValueError`s raised inside validators,
    and these errors must reach callers (and the CLI exit-code mapping) unchanged.
    """


class InvalidInputError(BalanceError):
    """Inputs violate a documented precondition."""


class ZeroVarianceError(InvalidInputError):
    """One or more covariate columns are constant over the population."""

    def __init__(self, columns: list[str]):
        self.columns = columns
        super().__init__(
            f"Covariates with zero population standard deviation: {', '.join(columns)}"
        )


class GridCoverageError(InvalidInputError):
    """The delta grid does not reach the largest SMD it must cover."""


class ProvenanceMismatchError(InvalidInputError):
    """A cached reference set was built for a different population, scheme or sizes."""


class InfeasibleSchemeError(BalanceError):
    """A sampling scheme cannot produce splits of the requested sizes."""


class EnumerationCapError(InfeasibleSchemeError):
    """Exhaustive enumeration would exceed the configured split cap."""


class InputParseError(BalanceError):
    """An input file (covariates, split, config, reference cache) could not be parsed."""

    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        self.line = line
        self.column = column
        location = ""
        if line is not None:
            location = f" (line {line}" + (f", column '{column}'" if column else "") + ")"
        super().__init__(f"{message}{location}")
