"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, DataFormatError
exits 2, DegenerateGeometryError exits 3.
"""

__all__ = ["SpaError", "DataFormatError", "DegenerateGeometryError"]


class SpaError(Exception):
    """Base class for errors raised by this package."""


class DataFormatError(SpaError):
    """Malformed input data: point files, model files, config files."""


class DegenerateGeometryError(SpaError):
    """Geometry too degenerate for a stable numerical solution."""
