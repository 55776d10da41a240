"""Exception hierarchy. Every failure mode raised by the package lives here."""

from __future__ import annotations


class PeriscopeError(Exception):
    """Base class for all package errors."""


class UsageError(PeriscopeError):
    """Malformed user input: expressions, scene files, argument formats."""


class SceneFormatError(UsageError):
    """Scene document violates the schema."""


class NumericalFailure(PeriscopeError):
    """An iterative solver failed to converge.

    Carries optional context so tracing failures can name the patch and
    segment involved.
    """

    def __init__(self, message, *, patch_id=None, segment=None):
        super().__init__(message)
        self.patch_id = patch_id
        self.segment = segment


class InversionError(NumericalFailure):
    """Newton inversion of a map did not converge."""


class SingularJacobianError(NumericalFailure):
    """Jacobian (numerically) singular where invertibility is required."""


class RadiusUnderflowError(NumericalFailure):
    """Neighborhood shrank below the useful scale without meeting tolerances."""


class ConstructionError(PeriscopeError):
    """A requested construction is mathematically inadmissible as posed."""


class DegenerateNormalError(ConstructionError):
    """Reflection requested across a (near-)zero normal."""


class NotGradientError(ConstructionError):
    """Vector field has a curl deficit above tolerance; no potential exists."""


class ZeroDisplacementError(ConstructionError):
    """Displacement field is identically zero on the sampled domain."""


class DomainsNotDisjointError(ConstructionError):
    """Source and image regions overlap where the construction forbids it."""


class ImageNotConvexError(ConstructionError):
    """Sampled image of a domain failed the convexity check."""


class CTooSmallError(ConstructionError):
    """Path constant too small: verification found superfluous intersections."""


class ExtensionViolationError(ConstructionError):
    """Piecewise extension domain does not contain its piece, or is invalid."""


class PieceOverlapError(ConstructionError):
    """Pieces or their images have overlapping interiors."""


class NotHyperbolicError(ConstructionError):
    """Discriminant of the factorization PDE is not positive at the point.

    ``classification`` is one of ``"elliptic"`` or ``"degenerate"``.
    """

    def __init__(self, message, classification):
        super().__init__(message)
        self.classification = classification


class HessianDegenerateError(ConstructionError):
    """A Hessian that must stay nonsingular became degenerate."""


class NoValidShiftError(ConstructionError):
    """No intermediate-domain shift found within the search radius."""


class PlacementError(ConstructionError):
    """Domain placement precondition (half-plane x1 < 0) violated."""


class MixedOrientationError(ConstructionError):
    """Map orientation is not constant over the sampled domain."""


class CellDecompositionError(ConstructionError):
    """A partition cell could not be covered by a local decomposition."""


class InconsistentSystemError(ConstructionError):
    """Traced behavior contradicts the declared two-mirror normal form."""


class VerificationError(PeriscopeError):
    """Verification ran and failed; carries the report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
