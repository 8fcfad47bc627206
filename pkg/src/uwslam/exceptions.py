"""Error types raised across the package."""


class UwslamError(Exception):
    """Base class for all errors raised by uwslam."""


# geometry
class PointBehindCamera(UwslamError, ValueError):
    pass


class UnknownCamera(UwslamError, KeyError):
    pass


class PixelOutOfBounds(UwslamError, ValueError):
    pass


class DegenerateGeometry(UwslamError, ValueError):
    pass


# sensors
class EmptyBatch(UwslamError, ValueError):
    pass


class NonMonotonicTimestamps(UwslamError, ValueError):
    pass


# graph
class InvalidResidual(UwslamError, ValueError):
    pass


class GaugeUnfixed(UwslamError, RuntimeError):
    pass


class RankDeficient(UwslamError, RuntimeError):
    pass


class DivergedNaN(UwslamError, RuntimeError):
    pass


class UnknownLandmark(UwslamError, KeyError):
    pass


# simulator
class InvalidSpec(UwslamError, ValueError):
    pass


class InvalidRates(UwslamError, ValueError):
    pass


# io
class ParseError(UwslamError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(UwslamError, ValueError):
    pass


class NonOrthonormalRotation(UwslamError, ValueError):
    pass


class NonFinitePoint(UwslamError, ValueError):
    pass


# semantics
class DimensionMismatch(UwslamError, ValueError):
    pass


class UnknownClassId(UwslamError, ValueError):
    pass


class EmptyGroundTruth(UwslamError, ValueError):
    pass


# eval
class InsufficientOverlap(UwslamError, ValueError):
    pass


class DegenerateConfiguration(UwslamError, ValueError):
    pass


class InsufficientSpan(UwslamError, ValueError):
    pass
