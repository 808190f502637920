"""Exception hierarchy shared by all modules."""


class FootfallError(Exception):
    """Base class for every error raised by this package."""


class MalformedRecord(FootfallError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnknownField(MalformedRecord):
    pass


class WindowNotMultipleOfStep(FootfallError):
    pass


class MismatchedInterval(FootfallError):
    pass


class GridMismatch(FootfallError):
    pass


class InsufficientData(FootfallError):
    pass


class TooShort(FootfallError):
    pass


class ContainsMissing(FootfallError):
    pass


class ConstantInput(FootfallError):
    pass


class LengthMismatch(FootfallError):
    pass


class NoOverlap(FootfallError):
    pass


class EmptyInput(FootfallError):
    pass


class InvalidParameter(FootfallError):
    pass


class ParameterMismatch(FootfallError):
    pass


class OutOfRange(FootfallError):
    pass


class ZeroDistanceStep(FootfallError):
    pass


class InvalidScenario(FootfallError):
    pass


class ConfigError(FootfallError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class IoError(FootfallError):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path
