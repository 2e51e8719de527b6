"""Error taxonomy shared by all flow4d modules."""


class Flow4DError(Exception):
    """Base class for all flow4d errors."""


class ShapeMismatch(Flow4DError):
    """Array shapes are mutually inconsistent."""


class NonFiniteValue(Flow4DError):
    """An unmasked element is NaN or infinite."""


class WeightOutOfRange(Flow4DError):
    """Pose weights violate the open-interval or unit-sum constraint."""


class ConfidenceOutOfRange(Flow4DError):
    """A confidence value is not strictly greater than 1."""


class InvalidTransform(Flow4DError):
    """Rotation is not a proper orthonormal matrix."""


class InvalidCamera(Flow4DError):
    """Focal length or optical center is out of range."""


class DegenerateGeometry(Flow4DError):
    """Point configuration carries no signal for the requested solve."""


class AllZeroPoints(Flow4DError):
    """Every valid point has zero norm; no scale can be defined."""


class InsufficientSupport(Flow4DError):
    """Fewer than three effective points back the pose solve."""


class DegenerateConfiguration(Flow4DError):
    """Weighted point set is (near-)collinear; rotation is not unique."""


class EmptyMask(Flow4DError):
    """A loss term was evaluated over an empty pixel mask."""


class InvalidProjection(Flow4DError):
    """A masked pixel projects from at or behind the camera plane."""


class DegenerateAnchor(Flow4DError):
    """Anchor-view point map has zero mean norm; no scale factor exists."""


class Unsupported(Flow4DError):
    """Requested processing mode is declared but not implemented."""


class ConfigInvalid(Flow4DError):
    """Scene or metric configuration violates its invariants."""


class DegenerateSet(Flow4DError):
    """Point sets share no usable support for alignment."""


class IdentityMismatch(Flow4DError):
    """Predicted and ground-truth tracks disagree on points or frames."""


class EmptyIntersection(Flow4DError):
    """No sample is valid in both predicted and ground-truth sets."""


class CorruptContainer(Flow4DError):
    """Container file failed a structural or checksum check."""
