"""Exception hierarchy shared by the library and the CLI.

The CLI maps :class:`DataError` to exit code 3 and :class:`NumericalError`
to exit code 4.
"""


class DepthRefineError(Exception):
    pass


class DataError(DepthRefineError, ValueError):
    """Input data is missing, malformed, or inconsistent."""


class NumericalError(DepthRefineError, ArithmeticError):
    """A computation has no well-defined result for the given inputs."""


class DegenerateRange(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class EmptyMask(DataError):
    pass


class NonPositiveDepth(DataError):
    pass


class NonFinite(NumericalError):
    pass


class BehindCamera(NumericalError):
    pass


class DimensionMismatch(DataError):
    pass


class MalformedHeader(DataError):
    pass


class TruncatedPayload(DataError):
    pass


class UnsupportedVariant(DataError):
    pass


class ClampWarning(UserWarning):
    """Values were clipped to fit a file format's range."""
