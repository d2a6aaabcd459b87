"""Exception types raised across the package.

Every library-raised failure derives from :class:`NocsfitError` so callers
(notably the CLI) can map any failure class to a structured error report.
"""


class NocsfitError(Exception):
    """Base class for all errors raised by nocsfit."""


# -- geometry ---------------------------------------------------------------

class LengthMismatch(NocsfitError):
    """Two sequences that must have equal length do not."""


class DegenerateConfiguration(NocsfitError):
    """Point configuration too degenerate for a unique alignment (rank < 2)."""


class NoConsensus(NocsfitError):
    """RANSAC found no sample with a large-enough inlier set."""


class EmptyCloud(NocsfitError):
    """An operation received a point cloud with no points."""


# -- diffcore / networks ----------------------------------------------------

class ShapeMismatch(NocsfitError):
    """Tensor operands are not shape-conformable."""


class NonScalarLoss(NocsfitError):
    """backward() was asked to differentiate a non-1x1 node."""


# -- synthetic data ---------------------------------------------------------

class UnknownCategory(NocsfitError):
    """Category name outside the supported set."""


class TooFewVisiblePoints(NocsfitError):
    """Partiality crop left fewer surface samples than the observation needs."""


class FormatError(NocsfitError):
    """A persisted container is malformed, truncated, or version-incompatible."""


class ChecksumMismatch(FormatError):
    """Payload checksum does not match the stored value."""


# -- metrics ----------------------------------------------------------------

class EmptyCategory(NocsfitError):
    """A metric table was requested over a category with no records."""
