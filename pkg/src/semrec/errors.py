"""Exception types shared across the engine.

Everything derives from SemrecError so callers (CLI, HTTP service) can map
library failures to exit codes / status codes in one place.
"""


class SemrecError(Exception):
    """Base class for all semrec errors."""


# --- text processing ---

class MissingTitle(SemrecError):
    """Document rendering requires a non-empty title."""


class EmptyReview(SemrecError):
    """Query rendering requires summary and/or body text."""


# --- ingest ---

class FormatError(SemrecError):
    """Too many malformed lines in an input file."""


class TooFewPairs(SemrecError):
    """Not enough interaction pairs for the requested operation."""


# --- sparse index ---

class EmptyCorpus(SemrecError):
    """BM25 index requires at least one document."""


class DuplicateDoc(SemrecError):
    """Corpus contains the same item_id twice."""


class UnknownDoc(SemrecError):
    """Requested document is not in the index."""


# --- encoder ---

class EmptySequence(SemrecError):
    """Encoding requires at least one token."""


class AllMasked(SemrecError):
    """Mean pooling requires at least one unmasked position."""


class ZeroVector(SemrecError):
    """Cannot L2-normalize a (near-)zero vector."""


class NotNormalized(SemrecError):
    """Operation requires unit-norm embeddings."""


# --- trainer ---

class NonNormalizedRows(SemrecError):
    """Loss inputs must have unit-norm rows."""


class NonFinite(SemrecError):
    """A computation produced NaN or infinity."""


class ShapeMismatch(SemrecError):
    """Parameter and gradient shapes disagree."""


# --- quantization ---

class NonFiniteWeights(SemrecError):
    """Model weights must be finite before quantization."""


# --- indexes / serialization ---

class EmptyIndex(SemrecError):
    """Search requires a non-empty index."""


class DimMismatch(SemrecError):
    """Vector dimensionality disagrees with the index or file header."""


class BadMagic(SemrecError):
    """File does not start with the expected magic bytes."""


class VersionMismatch(SemrecError):
    """File version is unsupported or the file is truncated."""


# --- metadata store ---

class DuplicateKey(SemrecError):
    """Catalog contains the same item_id twice."""


class ChecksumMismatch(SemrecError):
    """Stored checksum does not match file contents."""


# --- retrieval / eval ---

class UnknownField(SemrecError):
    """Filter references a field DisplayRecord does not have."""


class ArtifactsMissing(SemrecError):
    """Retrieval system lacks the artifacts required for the request."""


class LengthMismatch(SemrecError):
    """Paired score vectors must be aligned and of equal length."""


class MissingTruth(SemrecError):
    """Every evaluated query needs a ground-truth item."""
