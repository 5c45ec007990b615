"""Exception types shared across the package."""


class PrunekitError(Exception):
    """Base class for all package errors."""


class InputError(PrunekitError, ValueError):
    """Invalid argument or malformed input data."""


class EmptyResultError(PrunekitError):
    """An operation that must return data produced nothing (e.g. crop removed all points)."""


class DegeneratePoseError(PrunekitError):
    """Pose construction hit a geometric degeneracy (parallel vectors, zero cross product)."""
