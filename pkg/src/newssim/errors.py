"""Exception types shared across the engine."""


class NewssimError(Exception):
    """Base class for all engine errors."""


class FetchError(NewssimError):
    """Network failure or non-2xx response after retries."""

    def __init__(self, url: str, status: int | None = None, reason: str = ""):
        self.url = url
        self.status = status
        self.reason = reason
        detail = f"status={status}" if status is not None else reason or "unreachable"
        super().__init__(f"fetch failed for {url}: {detail}")


class EmptyBodyError(NewssimError):
    """HTML document contains no extractable paragraph text."""


class RangeError(NewssimError, ValueError):
    """Numeric argument outside its documented range."""


class FormatError(NewssimError):
    """Malformed input file (CSV header, cache header, ...)."""


class EmptyDatasetError(NewssimError):
    """Operation requires at least one record."""


class NotFoundError(NewssimError):
    """Requested artifact does not exist."""


class ProviderError(NewssimError):
    """An external provider (NER, embedding) failed; distinct from an empty result."""


class MissingEmbeddingError(NewssimError):
    """Cache provider has no vector for the requested span key."""

    def __init__(self, key: str):
        self.key = key
        super().__init__(f"no cached embedding for key {key}")


class DimensionError(NewssimError, ValueError):
    """Vector or parameter shapes do not agree."""


class ZeroVectorError(NewssimError):
    """Cosine similarity of an all-zero vector is undefined."""


class ArgumentError(NewssimError, ValueError):
    """Series arguments are empty or of mismatched length."""


class DegenerateError(NewssimError):
    """Statistic undefined on this input (e.g. zero variance)."""


class IncompleteError(NewssimError):
    """A report cell has no data."""

    def __init__(self, metric: str, approach: str):
        self.metric = metric
        self.approach = approach
        super().__init__(f"no scored pairs for cell ({metric}, {approach})")
