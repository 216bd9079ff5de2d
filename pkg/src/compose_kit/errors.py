"""Exception types shared across the package."""


class ComposeKitError(Exception):
    """Base class for all package-specific errors."""


class DegenerateInput(ComposeKitError):
    """Point correspondences are rank-deficient and cannot be fitted."""


class ZeroScale(ComposeKitError):
    """A scale or size norm that must be positive is zero."""


class TooFewPoints(ComposeKitError):
    """A point cloud has fewer points than the operation requires."""


class ShapeMismatch(ComposeKitError):
    """Tensor operands have incompatible shapes."""


class LengthMismatch(ComposeKitError):
    """Paired sequences differ in length."""


class NotScalar(ComposeKitError):
    """Backward was requested from a non-scalar tensor."""


class MissingGradient(ComposeKitError):
    """An optimizer step was taken before gradients were populated."""


class BadSpec(ComposeKitError):
    """A shape specification has invalid parameters."""


class EmptyView(ComposeKitError):
    """A rendered partial view kept too few points to be usable."""


class EmptyInput(ComposeKitError):
    """A metric was requested over an empty prediction list."""
