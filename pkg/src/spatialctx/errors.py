"""Exception hierarchy.

Every error carries the CLI exit code it maps to, so the command-line layer
can translate failures without a lookup table.
"""


class SpatialCtxError(Exception):
    exit_code = 1


class InvalidArgumentError(SpatialCtxError, ValueError):
    exit_code = 5


class EmptyPatternError(InvalidArgumentError):
    pass


class InsufficientPointsError(InvalidArgumentError):
    pass


class EmptyClassError(InsufficientPointsError):
    pass


class OutOfRangeError(SpatialCtxError, IndexError):
    exit_code = 5


class InconsistentInputError(SpatialCtxError):
    exit_code = 4


class CoincidentPointsError(InconsistentInputError):
    pass


class InconsistentModelError(InconsistentInputError):
    pass


class ParseError(SpatialCtxError):
    exit_code = 3


class FormatVersionError(ParseError):
    pass
