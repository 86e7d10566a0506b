"""
Exceptions for the patchvoronoi kernel.
"""

from typing import Optional


class PatchVoronoiError(Exception):
    """Base exception for all patchvoronoi errors."""

    pass


class MeshFormatError(PatchVoronoiError):
    """Raised when an input file cannot be parsed."""

    def __init__(
        self, message: str, path: Optional[str] = None, line: Optional[int] = None
    ):
        super().__init__(message)
        self.path = path
        self.line = line


class MeshValidationError(PatchVoronoiError):
    """Raised when a parsed mesh violates a validity invariant."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class SpatialIndexError(PatchVoronoiError):
    """Raised when a BVH is requested over an empty or unknown scope."""

    pass


class FieldError(PatchVoronoiError):
    """Raised when a linear field cannot be fitted or compared."""

    pass


class InvalidWeightError(FieldError):
    """Raised when a metric weight is out of range."""

    def __init__(self, message: str, patch: Optional[int] = None):
        super().__init__(message)
        self.patch = patch


class PolytopeError(PatchVoronoiError):
    """Raised when a polytope operation is called outside its contract."""

    pass


class InconsistentCutError(PolytopeError):
    """Raised when float-mode cutting detects a combinatorial inconsistency."""

    def __init__(self, message: str, tet: Optional[int] = None):
        super().__init__(message)
        self.tet = tet


class PropagationError(PatchVoronoiError):
    """Raised when per-tet generator discovery does not terminate."""

    pass


class ConfigurationError(PatchVoronoiError):
    """Raised when configuration values are invalid."""

    pass
