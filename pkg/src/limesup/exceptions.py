"""Exception types shared across the package."""


class DataError(ValueError):
    """Invalid input data or configuration (bad CSV cell, degenerate split, ...)."""


class NumericError(RuntimeError):
    """A numeric procedure failed in a way no fallback could repair."""
