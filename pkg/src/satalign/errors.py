"""Exception types shared across the toolkit."""


class SatalignError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SatalignError):
    """Invalid configuration, arguments, or missing inputs (CLI exit code 2)."""


class DataError(SatalignError):
    """Invalid or inconsistent input data (CLI exit code 3)."""


class RasterFormatError(DataError):
    """Unreadable raster file or unsupported sample layout."""


class DomainError(DataError):
    """A parameter or sample lies outside its mathematical domain."""
