"""Exception hierarchy for the stlid package.

The CLI maps these onto exit codes: data-shaped problems (parsing,
consistency, non-finite values) exit with 2, configuration problems with 3.
"""


class StlidError(Exception):
    """Base class for all stlid errors."""


class DataError(StlidError):
    """A dataset violates an invariant (non-finite value, bad shape, ...)."""


class ParseError(DataError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, path, line_no, message):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class ConsistencyError(DataError):
    """Two input files disagree (unknown ids, mismatched step ranges, ...)."""


class ConfigError(StlidError):
    """A configuration value violates its invariants or preconditions."""


class DegenerateInputError(StlidError):
    """Input carries no usable variation (all values identical)."""


class DegenerateNeighborhoodError(StlidError):
    """All retained neighbor distances are equal; the estimator is undefined."""


class InsufficientNeighborsError(StlidError):
    """Fewer than two strictly positive distances remain after the zero policy."""
