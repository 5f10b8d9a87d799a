"""Exception hierarchy shared by every ranksel module."""


class RankselError(Exception):
    """Base class for library errors."""


class InvalidInputError(RankselError, ValueError):
    pass


class CapacityError(RankselError):
    """An exact (enumerating) path was asked for more candidates than it supports."""


class DegenerateError(RankselError, ArithmeticError):
    """A ratio or comparison is undefined because a probability is zero."""


class ImpossibleStatusError(RankselError):
    """The observed status vector has zero probability under the model."""
