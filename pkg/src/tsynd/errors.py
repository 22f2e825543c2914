"""Exception hierarchy shared by every subpackage."""


class TsyndError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(TsyndError, ValueError):
    """Operand or input dims are incompatible."""


class DomainError(TsyndError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class NonFiniteError(TsyndError, ValueError):
    """A tensor would contain NaN or Inf."""


class GraphError(TsyndError, RuntimeError):
    """Misuse of the differentiation graph (non-scalar loss, double backward)."""


class SpecError(TsyndError, ValueError):
    """A network description is malformed or inconsistent with its parameters."""


class MissingGradientError(TsyndError, RuntimeError):
    """An optimizer step was requested before gradients were populated."""


class FormatError(TsyndError, ValueError):
    """A file does not follow its binary or text format."""


class CorruptFileError(FormatError):
    """A file is truncated or its payload is inconsistent with its header."""


class BadMagicError(FormatError):
    """A file starts with unexpected magic bytes."""


class UnsupportedVersionError(FormatError):
    """A file declares a version or dtype this reader does not understand."""


class DataError(TsyndError, ValueError):
    """A dataset violates its invariants (empty class, label out of range, ...)."""


class ConfigError(TsyndError, ValueError):
    """A configuration document has unknown keys or invalid values."""
