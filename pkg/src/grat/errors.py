"""Exception hierarchy shared by every grat module."""


class GratError(ValueError):
    """Base class; the CLI maps any subclass to exit code 1."""


class DivisibilityError(GratError):
    pass


class RankMismatch(GratError):
    pass


class OutOfBounds(GratError):
    pass


class ShapeMismatch(GratError):
    pass


class UnsupportedRank(GratError):
    pass


class UnsupportedScheme(GratError):
    pass


class PlanGridMismatch(GratError):
    pass


class NonFiniteInput(GratError):
    pass


class FullyMaskedRow(GratError):
    pass


class NonStochasticRows(GratError):
    pass


class InvalidReps(GratError):
    pass


class OracleMismatch(GratError):
    pass


class BadMagic(GratError):
    pass


class TruncatedFile(GratError):
    pass


class RankZero(GratError):
    pass


class OverflowDims(GratError):
    pass
