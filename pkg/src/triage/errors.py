"""Exception hierarchy. The CLI maps each family to its own exit code."""


class TriageError(Exception):
    exit_code = 1


class InputError(TriageError):
    """Missing, unreadable or shape-inconsistent input data."""

    exit_code = 2


class ConfigError(TriageError, ValueError):
    """Invalid budgets, weights or other user-supplied settings."""

    exit_code = 3


class ConsistencyError(TriageError):
    """An internal invariant broke; indicates a bug upstream."""

    exit_code = 4
