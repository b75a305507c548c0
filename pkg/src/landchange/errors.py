"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class LandchangeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(LandchangeError):
    """Bad or incomplete configuration."""


class DataError(LandchangeError):
    """Invalid input data: malformed files, geometry mismatches, bad values."""


class GridFormatError(DataError):
    """Malformed grid file. Messages carry path and line number."""


class GeometryError(DataError):
    """Rasters that should share geometry do not."""


class NumericalError(LandchangeError):
    """Numerical failure: singular matrix, non-convergence, undefined statistic."""
