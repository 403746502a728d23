"""Exception hierarchy shared by every module."""


class ProxyHashError(Exception):
    """Base class for all errors raised by proxyhash."""


class InvalidInputError(ProxyHashError, ValueError):
    """Non-finite or otherwise malformed numeric input."""


class DimensionError(ProxyHashError, ValueError):
    """Shapes or code lengths that do not line up."""


class InvalidLabelError(ProxyHashError, ValueError):
    """Empty positive set, out-of-range category, or an all-zero label row."""


class ConfigError(ProxyHashError, ValueError):
    """Invalid hyperparameter or run configuration."""


class FormatError(ProxyHashError):
    """A file on disk does not match its expected binary layout."""


class TrainingError(ProxyHashError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch
