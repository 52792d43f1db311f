"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for every error raised by this package."""


class InvalidRotation(ToolkitError):
    """Rotation matrix is not orthonormal with determinant +1."""


class DimensionMismatch(ToolkitError):
    """Spatial dimensions of two arrays do not agree."""


class EmptyDepth(ToolkitError):
    """Depth map has no valid pixel left to densify from."""


class DepthOutOfRange(ToolkitError):
    """Depth value exceeds the configured maximum range."""


class MissingModality(ToolkitError):
    """A fusion mode requires an input modality that was not supplied."""


class KernelTooLarge(ToolkitError):
    """Pooling output grid exceeds the spatial size of the feature map."""


class ShapeMismatch(ToolkitError):
    """Tensor shapes are inconsistent with the network configuration."""


class EmptyDataset(ToolkitError):
    """Operation requires at least one record or sample."""


class EmptyMaster(ToolkitError):
    """Master sensor stream contains no readings."""


class MissingLux(ToolkitError):
    """Frame record carries no illuminance reading."""


class EmptyEvaluation(ToolkitError):
    """Confusion counts cover zero pixels."""


class TooManySegments(ToolkitError):
    """Requested superpixel count exceeds the number of pixels."""


class UnknownSegmentId(ToolkitError):
    """Superpixel id outside the realized label range."""


class PortInUse(ToolkitError):
    """Requested TCP port is already bound."""


class ParseError(ToolkitError):
    """Manifest line could not be parsed.

    Carries the 1-based line number and the offending field name so the
    caller can point at the exact spot in the file.
    """

    def __init__(self, message: str, line: int, field: str | None = None):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.field = field
