"""Exception types raised across the package."""


class SilrefineError(ValueError):
    """Base class for all package errors."""


class InvalidQuaternionError(SilrefineError):
    pass


class BehindCameraError(SilrefineError):
    def __init__(self, message, vertex_index=None):
        super().__init__(message)
        self.vertex_index = vertex_index


class InvalidDepthError(SilrefineError):
    pass


class InvalidBBoxError(SilrefineError):
    pass


class InvalidReferenceError(SilrefineError):
    pass


class ObjParseError(SilrefineError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class InvalidCanonicalDistanceError(SilrefineError):
    pass


class DimensionMismatchError(SilrefineError):
    pass


class NoValidInitError(SilrefineError):
    pass


class DivergedError(SilrefineError):
    """Refinement could not keep the mesh in front of the camera."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class EmptyClusterError(SilrefineError):
    pass


class MissingShapeEntryError(SilrefineError, KeyError):
    pass


class ImageIdMismatchError(SilrefineError):
    pass


class SchemaError(SilrefineError):
    pass


class SceneGenerationError(SilrefineError):
    pass


class InvalidConfigError(SilrefineError):
    pass
