"""Exception types shared across the package.

Every error raised on a contract violation derives from VoxrotError so
callers (CLI, service) can map library failures to exit code 1 / HTTP 4xx
uniformly, while genuine bugs still surface as ordinary exceptions.
"""

from __future__ import annotations


class VoxrotError(Exception):
    """Base class for all contract violations raised by this package."""


class DimensionMismatch(VoxrotError):
    """Operands disagree on vector/matrix dimensionality."""


class InvalidShape(VoxrotError):
    """An array has the wrong rank or a non-square/empty shape."""


class ZeroVector(VoxrotError):
    """A vector that must be nonzero has norm below the working floor."""


class ZeroReflectionVector(ZeroVector):
    """A reflection vector has norm below the floor; the reflection is undefined."""


class NotPositiveDefinite(VoxrotError):
    """Covariance factorization failed; ``pivot`` is the failing pivot index."""

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = int(pivot)
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


class DegenerateCovariance(VoxrotError):
    """Too few samples (or no variance) to form a usable covariance."""


class EmptyPool(VoxrotError):
    """An embedding pool with no records where at least one is required."""


class PoolTooSmall(VoxrotError):
    """A pool has fewer speakers than an operation needs."""


class SplitMissing(VoxrotError):
    """A required split (train/enroll/trial) has no records."""


class InsufficientUtterances(VoxrotError):
    """A speaker has too few utterances for the requested statistic."""

    def __init__(self, speaker: str, message: str | None = None):
        self.speaker = speaker
        super().__init__(message or f"speaker {speaker!r} has too few utterances")


class MatrixTooSmall(VoxrotError):
    """A similarity matrix is too small for the requested statistic."""


class DegenerateReference(VoxrotError):
    """The reference distinctiveness is zero; the gain ratio is undefined."""


class EmptyScores(VoxrotError):
    """A score set is missing target or non-target scores."""


class ZeroWeightSum(VoxrotError):
    """Aggregation weights sum to zero."""


class DivergenceDetected(VoxrotError):
    """A training loss became non-finite."""


class FormatError(VoxrotError):
    """A serialized file violates its format; carries byte offset and reason."""

    def __init__(self, offset: int, reason: str):
        self.offset = int(offset)
        self.reason = reason
        super().__init__(f"format error at byte {offset}: {reason}")


class InvalidSpec(VoxrotError):
    """A generation/config spec fails validation."""
