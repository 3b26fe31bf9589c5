"""Exception types shared across the toolkit.

The CLI maps these onto its exit-code contract: usage problems exit 2,
data/format problems exit 3, numerical failures exit 4.
"""


class DimensionError(ValueError):
    """Operand shapes/lengths are inconsistent with an operator."""


class ParameterError(ValueError):
    """A parameter is outside its documented domain."""


class CapacityError(ValueError):
    """A request would exceed a hard size guard (e.g. dense allocations)."""


class DataFormatError(Exception):
    """A file or stream does not match the expected container format."""


class SolverError(RuntimeError):
    """An inner solve failed; carries iteration context in the message."""


class DegenerateSceneError(RuntimeError):
    """A reconstruction step produced an empty/unusable intermediate."""
