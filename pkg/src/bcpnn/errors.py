"""Exception hierarchy shared by every module."""


class BcpnnError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(BcpnnError, ValueError):
    pass


class EncodingError(BcpnnError, ValueError):
    pass


class ShapeError(BcpnnError, ValueError):
    pass


class DataError(BcpnnError, ValueError):
    pass


class InvariantViolation(BcpnnError, RuntimeError):
    """An internal invariant broke. Always a bug, never a user error."""


class UnsupportedExportError(BcpnnError, ValueError):
    pass


class LoadError(BcpnnError, OSError):
    pass


class MagicMismatchError(LoadError):
    pass


class TruncatedFileError(LoadError):
    pass


class CountMismatchError(LoadError):
    pass
