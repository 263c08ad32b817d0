"""Exception types raised across the package.

All of them subclass :class:`GraSketchError`; the parameter-style ones also
subclass :class:`ValueError` so callers that only care about bad input can
catch that.
"""


class GraSketchError(Exception):
    """Base class for every error raised by grasketch."""


class InvalidParameterError(GraSketchError, ValueError):
    pass


class IncompatibleSketchError(GraSketchError, ValueError):
    """Two sketches cannot be merged.

    ``field`` names the first mismatching attribute.
    """

    def __init__(self, field, left=None, right=None):
        self.field = field
        self.left = left
        self.right = right
        super().__init__(f"incompatible sketches: {field} differs ({left!r} != {right!r})")


class CorruptSketchError(GraSketchError, ValueError):
    """Serialized bytes failed validation at byte ``offset``."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class EmptySketchError(GraSketchError):
    """The estimator needs at least one dart in every subsketch."""


class NumericalFailureError(GraSketchError, ArithmeticError):
    pass


class InvalidWindowError(InvalidParameterError):
    """A simulation index window does not cover the occupancy guard band."""
