"""Exception types. Each carries a short ``category`` used by the CLI."""


class PoseRetrievalError(Exception):
    category = "error"


class DegenerateDimensionsError(PoseRetrievalError, ValueError):
    category = "degenerate-dimensions"


class DegenerateGeometryError(PoseRetrievalError, ValueError):
    category = "degenerate-geometry"


class DegenerateMeshError(PoseRetrievalError, ValueError):
    category = "degenerate-mesh"


class BehindCameraError(PoseRetrievalError, ValueError):
    category = "behind-camera"


class ParseError(PoseRetrievalError, ValueError):
    category = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ParameterError(PoseRetrievalError, ValueError):
    category = "parameter"


class ShapeError(PoseRetrievalError, ValueError):
    category = "shape"


class EmptyInputError(PoseRetrievalError, ValueError):
    category = "empty-input"


class InsufficientNegativesError(PoseRetrievalError, ValueError):
    category = "insufficient-negatives"


class ConfigurationError(PoseRetrievalError, ValueError):
    category = "configuration"


class FormatError(PoseRetrievalError, ValueError):
    category = "format"
