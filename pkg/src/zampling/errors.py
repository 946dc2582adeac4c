"""Exception hierarchy. Each family maps to a CLI exit code."""


class ZamplingError(Exception):
    exit_code = 1


class ConfigError(ZamplingError, ValueError):
    exit_code = 1


class DimensionError(ZamplingError, ValueError):
    exit_code = 1


class InvalidDegreeError(ConfigError):
    pass


class EmptyShapeError(ConfigError):
    pass


class DataError(ZamplingError):
    exit_code = 2


class MissingFileError(DataError, FileNotFoundError):
    pass


class MagicMismatchError(DataError):
    pass


class TruncatedPayloadError(DataError):
    pass


class EmptyDatasetError(DataError, ValueError):
    pass


class NumericError(ZamplingError, ArithmeticError):
    exit_code = 3
