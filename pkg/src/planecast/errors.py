"""Exception types raised across the package."""


class PlanecastError(Exception):
    """Base class for all package-specific errors."""


class InvalidCameraError(PlanecastError):
    """Camera parameters violate their invariants (degenerate focal length,
    non-orthonormal rotation, bad depth range)."""


class DegenerateHomographyError(PlanecastError):
    """A plane-induced homography is singular, e.g. the plane passes through
    a camera center."""


class SceneFormatError(PlanecastError):
    """A scene directory or camera file is malformed; the message carries the
    offending path and, where known, the line number."""


class MpiFormatError(PlanecastError):
    """Base class for errors in the binary plane-stack file format."""


class MpiBadMagicError(MpiFormatError):
    """File does not start with the expected magic bytes."""


class MpiUnsupportedVersionError(MpiFormatError):
    """File declares a format version this code does not read."""


class MpiTruncatedError(MpiFormatError):
    """File ended before the declared payload was complete."""


class OptimizationError(PlanecastError):
    """Optimization failed: non-finite gradients or diverging loss."""
