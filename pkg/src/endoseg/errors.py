"""Exception hierarchy shared by all endoseg modules."""


class EndosegError(Exception):
    """Base class for every error raised by this package."""


# masks and geometry
class RleError(EndosegError, ValueError):
    pass


class SumMismatch(RleError):
    pass


class InteriorZero(RleError):
    pass


class DegeneratePolygon(EndosegError, ValueError):
    pass


class EmptyMask(EndosegError, ValueError):
    pass


class DimensionMismatch(EndosegError, ValueError):
    pass


class OutOfRange(EndosegError, ValueError):
    pass


class OutOfBounds(EndosegError, ValueError):
    pass


class DegenerateQuad(EndosegError, ValueError):
    pass


class BadGeometry(EndosegError, ValueError):
    pass


class IndexOutOfRange(EndosegError, IndexError):
    pass


# frame io
class NotFound(EndosegError, FileNotFoundError):
    pass


class DecodeFailure(EndosegError):
    pass


class InconsistentDimensions(DecodeFailure):
    pass


class EncodeFailure(EndosegError):
    pass


class OutOfOrderFrame(EncodeFailure):
    pass


# segmentation backends
class BackendFailure(EndosegError):
    pass


# serialized files
class ParseError(EndosegError, ValueError):
    pass


class SchemaError(ParseError):
    pass


class DuplicateId(SchemaError):
    pass


class SchemaVersionUnsupported(ParseError):
    pass


# evaluation
class UnknownFrame(EndosegError, KeyError):
    pass


class NoGroundTruthNoPrediction(EndosegError):
    """AP is undefined when there is neither a ground truth nor a prediction."""


# orchestration
class ConfigError(EndosegError, ValueError):
    pass


class BadFractions(ConfigError):
    pass
