"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors 2,
numerical failures 3.
"""


class KnotmatchError(Exception):
    """Base class for package errors."""


class ContractError(KnotmatchError):
    """A documented precondition or invariant was violated by the caller."""


class DataError(KnotmatchError):
    """Malformed or inconsistent input data (files, labels, ids)."""


class NumericalError(KnotmatchError):
    """Numerical failure (degenerate particle population, non-finite objective)."""


class GenerationError(KnotmatchError):
    """Board simulation could not satisfy its constraints (overcrowded config)."""
