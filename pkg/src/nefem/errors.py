"""Exception and warning types raised across the package."""


class NefemError(Exception):
    """Base class for all package errors."""


class DomainError(NefemError, ValueError):
    """A parameter lies outside the domain of a map or basis."""


class KnotVectorError(NefemError, ValueError):
    """Invalid knot vector or rejected knot insertion."""


class InvalidPatchError(NefemError, ValueError):
    """Patch data is inconsistent or the weight function is not positive."""


class IllConditionedTransformError(NefemError):
    """The Greville transformation matrix is (numerically) singular."""


class GeometryError(NefemError):
    """Mesh geometry violates an assumption of the method."""


class UnsupportedTopologyError(GeometryError):
    """An element would carry more than one curved face."""


class WrongElementKindError(NefemError, TypeError):
    """Operation requested on an element of the wrong kind."""


class InvertedElementError(NefemError):
    """Non-positive Jacobian determinant inside an element."""


class PointLocationError(NefemError):
    """Newton inversion of an element map did not converge."""


class QuadratureError(NefemError):
    """A quadrature rule could not be constructed."""


class DegeneratePointError(QuadratureError):
    """A hybrid quadrature point has (near) zero norm and cannot be normalised."""


class SurfaceMeasureError(QuadratureError):
    """Degenerate surface tangents encountered during surface integration."""


class SolverError(NefemError):
    """Iterative solver failed to converge.

    Attributes
    ----------
    residuals : list of float
        Relative residual history up to the failure.
    """

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class SchemaError(NefemError, ValueError):
    """Geometry or study file failed validation."""


class NefemWarning(UserWarning):
    """Base class for package warnings."""


class NegativeWeightWarning(NefemWarning):
    """A moment-fitted quadrature rule has negative weights."""


class DegenerateDerivativeWarning(NefemWarning):
    """Requested derivative order exceeds the spline degree."""
