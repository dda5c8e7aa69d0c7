"""Exception hierarchy shared across the package."""


class TopoembedError(Exception):
    """Base class for all package errors."""


class DomainError(TopoembedError, ValueError):
    """An argument is outside its mathematical/physical domain."""


class ContractError(TopoembedError, ValueError):
    """A shape or interface contract was violated."""


class BoundaryError(TopoembedError):
    """A requested window falls outside the raster bounds."""


class DataQualityError(TopoembedError):
    """Input data is contaminated (nodata pixels inside a patch window)."""


class CapacityError(TopoembedError):
    """Not enough data to satisfy the request (e.g. too few positives)."""


class EmptyClassError(TopoembedError):
    """A class query or file produced zero coordinates."""


class NetworkError(TopoembedError):
    """A remote query failed after retries."""

    def __init__(self, message, retries=0):
        super().__init__(message)
        self.retries = retries
