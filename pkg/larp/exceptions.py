"""
Exceptions raised by the layered random projection library.

Every concrete error also inherits the closest built-in exception, so code
catching ``ValueError`` (or ``MemoryError`` for the dense oracle) keeps
working without knowing about this module.
"""


class LarpError(Exception):
    """Base class for all errors raised by ``larp``."""


class InvalidParameterError(LarpError, ValueError):
    """
    A distribution parameter or feature map value is not finite.
    """


class ConfigError(LarpError, ValueError):
    """
    The architecture or optimizer configuration is invalid: non-square or
    even kernel support, even median window, wiring pointing past the
    previous layer, non-positive sizes.
    """


class ShapeError(LarpError, ValueError):
    """
    Array shapes do not agree: map smaller than its kernel, upstream gradient
    of the wrong size, image dimensions different from the model's, or a
    trace produced by another model.
    """


class OracleTooLargeError(LarpError, MemoryError):
    """
    The explicit (H*W) x (H*W) projection matrix would exceed the configured
    entry cap.
    """


class InputError(LarpError, ValueError):
    """
    Caller-supplied data is unusable: label out of range, non-finite initial
    loss, split fraction outside (0, 1), class too small to split.
    """


class FormatError(LarpError, ValueError):
    """
    A file does not follow its format: wrong IDX magic, truncated payload,
    non-P5 image, malformed model or config document.
    """


class EmptyDatasetError(FormatError):
    """A dataset source yielded no samples."""
