"""Exception hierarchy shared across the package."""


class NemForecastError(Exception):
    """Base class for every error raised by this package."""


# market data
class NetworkUnavailable(NemForecastError):
    pass


class IntegrityError(NemForecastError):
    pass


class RangeError(NemForecastError, ValueError):
    pass


class SpecError(NemForecastError, ValueError):
    pass


class EmptySeries(NemForecastError, ValueError):
    pass


# pipeline
class AlignmentError(NemForecastError, ValueError):
    pass


class SegmentTooShort(NemForecastError, ValueError):
    pass


class DegenerateColumnWarning(UserWarning):
    """A scaler column had max == min on the fit rows and was mapped to 0."""


# models
class ConfigError(NemForecastError, ValueError):
    pass


class ShapeError(NemForecastError, ValueError):
    pass


class NonFiniteOutput(NemForecastError, FloatingPointError):
    pass


# training
class DivergenceError(NemForecastError, FloatingPointError):
    pass


class EmptyDataset(NemForecastError, ValueError):
    pass


class BudgetZero(NemForecastError, ValueError):
    pass


# evaluation
class SeriesTooShort(NemForecastError, ValueError):
    pass


class ZeroBenchmark(NemForecastError, ZeroDivisionError):
    pass


class EmptyDump(NemForecastError, ValueError):
    pass


class HorizonTooShort(NemForecastError, ValueError):
    pass


class EmptySubset(NemForecastError, ValueError):
    pass


# reporting
class NothingToReport(NemForecastError):
    pass
