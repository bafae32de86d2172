"""Exception types raised across the package."""


class MaxsheetError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class NotImmersed(MaxsheetError):
    pass


class NotTimelike(MaxsheetError):
    pass


class GaugeViolation(MaxsheetError):
    """Initial data does not satisfy the orthonormal gauge constraints."""


class GridTooCoarse(MaxsheetError):
    pass


class DomainExceeded(MaxsheetError):
    """A characteristic coordinate s +- t fell outside the data window."""


class WindowExit(MaxsheetError):
    pass


class NoSignChange(MaxsheetError):
    pass


class NotFound(MaxsheetError):
    pass


class NotSingularAnchor(MaxsheetError):
    pass


class RequiresPeriodic(MaxsheetError):
    pass


class MarginViolated(MaxsheetError):
    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class SingularOnPath(MaxsheetError):
    pass


class NotUniformlyTimelike(MaxsheetError):
    pass


class UnknownName(MaxsheetError):
    pass


class NotC1(MaxsheetError):
    pass
