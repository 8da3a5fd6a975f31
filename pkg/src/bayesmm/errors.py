"""Exception hierarchy shared across the package."""


class BayesMMError(Exception):
    """Base class for all package errors."""


class InvalidInputError(BayesMMError, ValueError):
    """An argument violates a documented precondition."""


class ConfigurationError(BayesMMError, ValueError):
    """Inconsistent or out-of-domain configuration."""


class FileFormatError(BayesMMError):
    """Base class for malformed feature or prompt files."""


class BadMagicError(FileFormatError):
    pass


class UnsupportedVersionError(FileFormatError):
    pass


class TruncatedFileError(FileFormatError):
    """Byte length disagrees with the header (short or trailing bytes)."""


class LabelRangeError(FileFormatError):
    pass
