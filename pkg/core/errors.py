class FadingError(Exception):
    """Base class for every failure raised by the fading-statistics library."""


class ParameterDomainError(FadingError, ValueError):
    """An input lies outside the region where the closed forms are valid."""


class TraceFormatError(FadingError, ValueError):
    """A trace file does not follow the kms-trace v1 layout."""


class InsufficientDataError(FadingError, ValueError):
    """The data cannot support the requested estimate."""


class DegenerateHistogramError(InsufficientDataError):
    pass


class InsufficientCrossingsError(InsufficientDataError):
    pass


class NumericalError(FadingError, ArithmeticError):
    """A numerical method failed to reach its requested accuracy."""


class SeriesConvergenceError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass
