"""Exception types shared across the package."""


class PgupdateError(Exception):
    """Base class for all pgupdate errors."""


class ConfigError(PgupdateError):
    """Invalid or incomplete configuration (CLI exit code 2)."""


class DataError(PgupdateError):
    """Invalid input data: observations, grids, ensembles (CLI exit code 3)."""


class FormatError(DataError):
    """Malformed on-disk file (bad magic, truncated payload, bad header)."""
