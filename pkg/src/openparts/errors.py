"""Exception hierarchy shared by every stage of the toolkit."""


class OpenPartsError(Exception):
    """Base class for all errors raised by openparts."""


class EmptyMesh(OpenPartsError):
    pass


class EmptyInput(OpenPartsError, ValueError):
    pass


class InvalidDirection(OpenPartsError, ValueError):
    pass


class ZeroVolume(OpenPartsError, ValueError):
    pass


class DegenerateMesh(OpenPartsError, ValueError):
    pass


class DegenerateBox(OpenPartsError, ValueError):
    pass


class InvalidCount(OpenPartsError, ValueError):
    pass


class UncoveredTriangle(OpenPartsError):
    """A triangle received no votes during per-triangle majority voting."""


class ParseError(OpenPartsError):
    pass


class UnsupportedFace(ParseError):
    pass


class SchemaError(ParseError):
    pass


class IndexOutOfRange(SchemaError):
    pass


class OverlapError(SchemaError):
    pass


class ShapeMismatch(OpenPartsError, ValueError):
    pass


class InvalidCamera(OpenPartsError, ValueError):
    pass


class InvalidMotion(OpenPartsError, ValueError):
    pass


class NotOpenable(OpenPartsError, ValueError):
    pass


class DepthTooSmall(OpenPartsError, ValueError):
    pass


class IoError(OpenPartsError, OSError):
    pass
