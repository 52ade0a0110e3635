"""Exception hierarchy shared across the package."""


class SemCanvasError(Exception):
    """Base class for all package errors."""


class ImageTooSmall(SemCanvasError):
    pass


class TooManyLevels(SemCanvasError):
    pass


class OutOfBounds(SemCanvasError):
    pass


class DimensionMismatch(SemCanvasError):
    pass


class SingularTransform(SemCanvasError):
    pass


class DegenerateConfiguration(SemCanvasError):
    pass


class EstimationFailed(SemCanvasError):
    pass


class EmptyInput(SemCanvasError, ValueError):
    pass


class EmptyMask(SemCanvasError):
    pass


class InsufficientFeatures(SemCanvasError):
    pass


class UnmappedClass(SemCanvasError, KeyError):
    pass


class DegenerateRect(SemCanvasError, ValueError):
    pass


class BackendFailure(SemCanvasError):
    """Segmentation backend died, timed out, or violated the protocol."""


class UnknownFrame(SemCanvasError, IndexError):
    pass


class SourceError(SemCanvasError):
    pass


class BaselineInitFailure(SemCanvasError):
    pass


class ConfigError(SemCanvasError, ValueError):
    pass
