"""Exception taxonomy for the splatlod toolkit.

Every error raised by the library derives from SplatLodError so callers can
catch toolkit failures without masking programming errors. Format errors keep
distinct subclasses because readers must distinguish bad magic, unknown
versions, and truncated payloads.
"""


class SplatLodError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameterError(SplatLodError):
    """A Gaussian parameter violates its invariant (scale, opacity, quaternion)."""


class NumericalDegeneracyError(SplatLodError):
    """A linear-algebra step failed or a covariance is too ill-conditioned."""


class DegenerateMergeError(SplatLodError):
    """A merge produced a non-positive total mass."""


class InsufficientPopulationError(SplatLodError):
    """An operation needs more active Gaussians than the set holds."""


class InvalidTargetError(SplatLodError):
    """Simplification target count outside [1, n]."""


class InconsistentSequenceError(SplatLodError):
    """A merge sequence does not match the set it is applied to."""


class NotFullySimplifiedError(SplatLodError):
    """Hierarchy construction requires a single-root merge sequence."""


class TokenTreeMismatchError(SplatLodError):
    """A token list does not correspond to the hierarchy tree it is used with."""


class FormatError(SplatLodError):
    """Base class for file-format failures."""


class MagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionError(FormatError):
    """File carries an unknown format version."""


class TruncationError(FormatError):
    """File ended before the declared payload was complete."""


class MissingPropertyError(FormatError):
    """A required PLY property is absent; the message names it."""


class UnsupportedVariantError(FormatError):
    """A recognized but unsupported file variant (e.g. ascii PLY)."""
