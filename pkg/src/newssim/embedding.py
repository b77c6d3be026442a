"""Text-embedding providers, pooling, concatenation, and the cosine baseline.

Vectors are 1-D float64 numpy arrays; a bundle of k spans embeds to a
(k, dim) matrix which mean-pooling collapses to a single row.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import DimensionError, FormatError, MissingEmbeddingError, ZeroVectorError
from .features import FeatureBundle

DEFAULT_DIM = 384
DEFAULT_MAX_TOKENS = 256


class EmbeddingProvider(Protocol):
    name: str
    dim: int
    max_tokens: int
    supported_languages: frozenset[str]

    def embed(self, text: str) -> np.ndarray: ...


def truncate_tokens(text: str, max_tokens: int = DEFAULT_MAX_TOKENS) -> str:
    """Keep the first max_tokens whitespace-delimited tokens, rejoined with
    single spaces (shorter texts pass through modulo whitespace collapsing)."""
    if max_tokens < 1:
        raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")
    return " ".join(text.split()[:max_tokens])


def span_key(text: str) -> str:
    """Cache key: SHA-256 hex of the exact (post-truncation) span text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class StubProvider:
    """Hermetic deterministic embedder: each token hashes to a seeded
    pseudorandom unit vector and a text embeds to the normalized token sum,
    making the output a pure function of (token multiset, seed)."""

    dim: int = DEFAULT_DIM
    seed: int = 13
    max_tokens: int = DEFAULT_MAX_TOKENS
    supported_languages: frozenset[str] = frozenset({"*"})
    _token_cache: dict[str, np.ndarray] = field(
        default_factory=dict, repr=False, compare=False
    )

    @property
    def name(self) -> str:
        return f"stub-d{self.dim}-s{self.seed}"

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            entropy = int.from_bytes(digest[:16], "big")
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=entropy, spawn_key=(self.seed,))
            )
            vec = rng.standard_normal(self.dim)
            vec /= np.linalg.norm(vec)
            self._token_cache[token] = vec
        return vec

    def embed(self, text: str) -> np.ndarray:
        tokens = text.split() or [""]
        # Accumulate sorted unique tokens so the float sum depends only on
        # the token multiset, never on token order.
        counts = Counter(tokens)
        total = np.zeros(self.dim)
        for token in sorted(counts):
            total += counts[token] * self._token_vector(token)
        norm = np.linalg.norm(total)
        if norm == 0.0:
            # Exact cancellation is unreachable with sha256-seeded unit
            # vectors at these dims; guard anyway.
            return self._token_vector("")
        return total / norm


class CacheProvider:
    """Read-only provider backed by a precomputed embedding-cache file.

    Lookups hash the incoming text; a miss is an error, never a silent
    fallback, so gaps in an exported cache surface immediately.
    """

    def __init__(self, path: Path | str, max_tokens: int = DEFAULT_MAX_TOKENS):
        self.path = Path(path)
        entries, dim, provider = read_cache(self.path)
        self._entries = entries
        self.dim = dim
        self.name = f"cache:{provider}"
        self.max_tokens = max_tokens
        self.supported_languages = frozenset({"*"})

    def embed(self, text: str) -> np.ndarray:
        key = span_key(text)
        vec = self._entries.get(key)
        if vec is None:
            raise MissingEmbeddingError(key)
        return vec


def embed_bundle(bundle: FeatureBundle, provider: EmbeddingProvider) -> np.ndarray:
    """Embed every span: row i is the provider embedding of the truncated
    i-th span, so the result is (len(spans), provider.dim)."""
    rows = [
        provider.embed(truncate_tokens(span, provider.max_tokens))
        for span in bundle.spans
    ]
    return np.vstack(rows)


def mean_pool(matrix: np.ndarray) -> np.ndarray:
    """Coordinate-wise mean of the rows: (k, d) -> (d,)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise DimensionError(f"mean_pool expects a (k>=1, d) matrix, got {matrix.shape}")
    return matrix.mean(axis=0)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"cosine needs equal-length vectors, got {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine similarity undefined for an all-zero vector")
    return float(a @ b / (na * nb))


def baseline_score(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine clamped below at 0 so baseline scores share the [0,1] label range."""
    return max(0.0, cosine_similarity(a, b))


def concat(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise DimensionError(f"concat needs equal dims, got {a.shape} vs {b.shape}")
    return np.concatenate([a, b])


# --------------------------------------------------------------------------
# Embedding-cache file
# --------------------------------------------------------------------------
# Line 1:  dim=<d> provider=<name>
# Lines:   <sha256-key><TAB><d space-separated decimals, 9 significant digits>


def write_cache(path: Path | str, entries: dict[str, np.ndarray], provider_name: str) -> Path:
    path = Path(path)
    dims = {np.asarray(v).shape for v in entries.values()}
    if len(dims) > 1:
        raise DimensionError(f"cache entries have mixed dims: {sorted(dims)}")
    dim = next(iter(dims))[0] if dims else DEFAULT_DIM

    lines = [f"dim={dim} provider={provider_name}"]
    for key in sorted(entries):
        values = " ".join(format(x, ".9g") for x in np.asarray(entries[key], dtype=np.float64))
        lines.append(f"{key}\t{values}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_cache(path: Path | str) -> tuple[dict[str, np.ndarray], int, str]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read embedding cache {path}: {exc}") from exc
    if not lines:
        raise FormatError(f"embedding cache {path} is empty")

    header = lines[0].split()
    fields = dict(part.split("=", 1) for part in header if "=" in part)
    if "dim" not in fields or "provider" not in fields:
        raise FormatError(f"bad cache header {lines[0]!r} in {path}")
    dim = int(fields["dim"])
    provider = fields["provider"]

    entries: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        key, _, rest = line.partition("\t")
        vec = np.array(rest.split(), dtype=np.float64)
        if vec.shape[0] != dim:
            raise FormatError(
                f"{path}:{lineno}: row length {vec.shape[0]} != header dim {dim}"
            )
        entries[key] = vec
    return entries, dim, provider
