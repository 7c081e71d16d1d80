"""
Exception hierarchy for mmforge
"""
from typing import Optional


class MmforgeError(Exception):
    """Base class for every error raised by the pipeline"""


# Ingestion
class MalformedDocument(MmforgeError):
    """Annotation file is not parseable"""


class MissingSection(MmforgeError):
    """Annotation file lacks a required top-level block"""


class UnknownImage(MmforgeError):
    """Image id does not resolve in the dataset index"""


# Annotation
class UnresolvedPlaceholder(MmforgeError):
    """Prompt template references a field that is not supplied"""


class MismatchedImage(MmforgeError):
    """Caption belongs to another image"""


class WrongPairCount(MmforgeError):
    """VQA reply does not hold exactly three pairs"""

    def __init__(self, found: int, expected: int = 3):
        super().__init__(f"expected {expected} question-answer pairs, found {found}")
        self.found = found
        self.expected = expected


class MalformedPair(MmforgeError):
    """VQA reply line is not part of a Q:/A: block"""


# Masks
class LengthMismatch(MmforgeError):
    """Sequence lengths disagree"""


class DimensionMismatch(MmforgeError):
    """Masks or vectors have different shapes"""


class EmptyTrack(MmforgeError):
    """Mask track has no frames"""


# Backends
class BackendError(MmforgeError):
    """Base class for gateway failures"""

    transient = False


class BackendTimeout(BackendError):
    """A single backend call timed out"""

    transient = True


class TransientExhausted(BackendError):
    """Retries used up on transient failures"""

    def __init__(self, stage: str, attempts: int, last_error: Optional[Exception] = None):
        super().__init__(f"{stage}: gave up after {attempts} attempts ({last_error})")
        self.stage = stage
        self.attempts = attempts
        self.last_error = last_error


class BadResponse(BackendError):
    """Backend reply violates its response invariants"""


class RemoteError(BackendError):
    """Backend replied with an error document"""

    def __init__(self, code: int, message: str):
        super().__init__(f"remote error {code}: {message}")
        self.code = code
        self.message = message

    @property
    def transient(self) -> bool:
        return self.code >= 500


# Orchestration
class ConfigInvalid(MmforgeError):
    """Pipeline configuration is invalid"""


class OutputRootUnwritable(MmforgeError):
    """Output directory cannot be created or written"""


class ComputeAbandoned(MmforgeError):
    """A shared stage computation was cancelled before it finished"""


# Dataset store
class InvariantViolation(MmforgeError):
    """Sample manifest breaks one of its invariants"""


class IoFailure(MmforgeError):
    """Dataset files could not be written"""


class SizeExceedsDataset(MmforgeError):
    """Requested subset or split is larger than the dataset"""


# Evaluation
class EmptyInput(MmforgeError):
    """Metric called on empty input"""


class UnknownTerm(MmforgeError):
    """Term is not a taxonomy node"""


class NotNormalized(MmforgeError):
    """Embedding is not a unit vector"""


class ClassSetMismatch(MmforgeError):
    """Baseline and candidate report different classes"""


# CLI
class UsageError(MmforgeError):
    """Bad command line"""
