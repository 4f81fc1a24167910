"""Exception types raised across the library.

Each class marks a failure mode the CLI maps to its own exit code, so
callers can tell bad input data from sampling degeneracies from numerical
blow-ups without parsing messages.
"""


class BasketVecError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(BasketVecError):
    """Raised for malformed, empty, or over-filtered interaction data."""


class ParseError(CorpusError):
    """A malformed row in a delimited interaction file.

    Carries the 1-based line number of the offending row.
    """

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SamplingError(BasketVecError):
    """Raised when triple or negative sampling cannot make progress."""


class TrainingError(BasketVecError):
    """Raised when optimization produces non-finite values and must abort."""


class NoRelevantItems(BasketVecError):
    """Skip signal: a user has no held-out items, so metrics are undefined.

    Aggregation catches this and leaves the user out of the averages; it is
    deliberately not a zero score.
    """


class EvaluationError(BasketVecError):
    """Raised when a metrics run has no evaluable user at all."""


class DegenerateComparisonError(BasketVecError):
    """Raised by the paired t-test when the difference vector has zero variance."""
