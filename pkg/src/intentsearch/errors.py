"""Exception types shared across the package."""


class IntentSearchError(Exception):
    """Base class for all package errors."""


class UnparsableQuery(IntentSearchError):
    """No intent element could be extracted from the query text."""


class MalformedIntentJson(IntentSearchError):
    """Structured intent output that does not parse or violates the schema."""


class EmbedderUnavailable(IntentSearchError):
    """Remote embedding provider could not be reached or answered non-200."""


class SegmenterUnavailable(IntentSearchError):
    """Remote segmentation provider could not be reached or answered non-200."""


class EditorUnavailable(IntentSearchError):
    """Remote image edit provider could not be reached or answered non-200."""


class DimensionMismatch(IntentSearchError):
    """Operands disagree on vector or pixel dimensions."""


class ZeroVector(IntentSearchError):
    """A zero-length vector cannot be normalized."""


class DuplicateId(IntentSearchError):
    """Two records share an id within one gallery or index."""


class InvalidBox(IntentSearchError):
    """Box prompt is degenerate or outside the image bounds."""


class EmptyGallery(IntentSearchError):
    """Search executed against a gallery with no records."""


class MissingImage(IntentSearchError):
    """A gallery record's image file does not exist on disk."""


class MetaParseError(IntentSearchError):
    """A metadata line failed to parse; carries its 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class CorruptEmbeddingsFile(IntentSearchError):
    """Embeddings file failed magic, version, or length verification."""


class UnknownGroundTruthId(IntentSearchError):
    """An evaluation query references an id absent from the gallery."""
