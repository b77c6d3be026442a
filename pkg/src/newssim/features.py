"""Per-metric feature extraction over a pluggable named-entity recognizer.

Three of the seven similarity dimensions (geography, entities, time) are
scored on extracted entity spans; the remaining four always use the full
article text. Empty extraction falls back to the full text so downstream
embedding never sees an empty bundle.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Protocol

from .errors import NotFoundError, ProviderError

if TYPE_CHECKING:
    from .corpus import ArticleRecord


class MetricKind(enum.Enum):
    """The seven rated similarity dimensions."""

    GEOGRAPHY = "geography"
    ENTITIES = "entities"
    TIME = "time"
    NARRATIVE = "narrative"
    STYLE = "style"
    TONE = "tone"
    OVERALL = "overall"

    def __str__(self) -> str:
        return self.value


ENTITY_METRICS = (MetricKind.GEOGRAPHY, MetricKind.ENTITIES, MetricKind.TIME)
FULL_TEXT_METRICS = (
    MetricKind.NARRATIVE,
    MetricKind.STYLE,
    MetricKind.TONE,
    MetricKind.OVERALL,
)

# Which provider labels feed each entity-based metric. Configurable because
# providers disagree on label inventories (GPE vs LOCATION etc.).
DEFAULT_LABEL_MAP: dict[MetricKind, frozenset[str]] = {
    MetricKind.GEOGRAPHY: frozenset({"LOCATION", "LOC", "GPE"}),
    MetricKind.TIME: frozenset({"DATE", "TIME"}),
}


@dataclass(frozen=True)
class Entity:
    text: str
    label: str
    start: int
    end: int


class NerProvider(Protocol):
    name: str
    supported_languages: frozenset[str]

    def recognize(self, text: str, language: str) -> list[Entity]: ...


@dataclass
class FeatureBundle:
    """Extracted spans for one (article, metric) pair.

    spans is never empty: entity metrics with an empty extraction carry the
    full article text instead, with fallback_used set.
    """

    metric: MetricKind
    spans: list[str]
    fallback_used: bool = False

    def __post_init__(self) -> None:
        if not self.spans:
            raise ValueError("FeatureBundle.spans must be non-empty")


def full_article_text(article: "ArticleRecord") -> str:
    """Single span used for the full-text metrics and the fallback path."""
    if article.title:
        return article.title + "\n" + article.body
    return article.body


def extract_features(
    article: "ArticleRecord",
    metric: MetricKind,
    ner: NerProvider,
    label_map: dict[MetricKind, frozenset[str]] | None = None,
) -> FeatureBundle:
    """Build the feature bundle for one article and one similarity metric.

    Geography keeps location-labelled entity texts, time keeps date/time
    entities, entities keeps every recognized entity regardless of label.
    The four subjective metrics bypass the recognizer entirely.
    """
    text = full_article_text(article)
    if metric in FULL_TEXT_METRICS:
        return FeatureBundle(metric=metric, spans=[text], fallback_used=False)

    labels = (label_map or DEFAULT_LABEL_MAP).get(metric)
    try:
        entities = ner.recognize(text, article.language)
    except Exception as exc:
        raise ProviderError(f"NER provider {ner.name!r} failed: {exc}") from exc

    if metric is MetricKind.ENTITIES:
        spans = [e.text for e in entities]
    else:
        assert labels is not None
        spans = [e.text for e in entities if e.label in labels]

    if not spans:
        return FeatureBundle(metric=metric, spans=[text], fallback_used=True)
    return FeatureBundle(metric=metric, spans=spans, fallback_used=False)


def feature_cache_key(article_id: str, metric: MetricKind, provider_name: str) -> str:
    """Stable filesystem-safe key for persisted bundles."""
    raw = "\x1f".join((article_id, metric.value, provider_name))
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()


def write_bundle(
    cache_dir: Path, article_id: str, provider_name: str, bundle: FeatureBundle
) -> Path:
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = feature_cache_key(article_id, bundle.metric, provider_name)
    path = cache_dir / f"{key}.json"
    payload = {
        "article_id": article_id,
        "metric": bundle.metric.value,
        "provider": provider_name,
        "spans": bundle.spans,
        "fallback_used": bundle.fallback_used,
    }
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8")
    return path


def read_bundle(cache_dir: Path, article_id: str, metric: MetricKind, provider_name: str) -> FeatureBundle:
    key = feature_cache_key(article_id, metric, provider_name)
    path = cache_dir / f"{key}.json"
    if not path.exists():
        raise NotFoundError(f"no cached bundle for ({article_id}, {metric.value}) at {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    return FeatureBundle(
        metric=MetricKind(payload["metric"]),
        spans=payload["spans"],
        fallback_used=payload["fallback_used"],
    )


# --------------------------------------------------------------------------
# Reference gazetteer provider
# --------------------------------------------------------------------------

_WORD_RE = re.compile(r"\w[\w'’\-]*", re.UNICODE)

_MONTHS = (
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
)
_MONTH_ALT = "|".join(_MONTHS)

# Numeric and month-anchored date shapes not expressible as lexicon lines.
_DATE_PATTERNS = [
    re.compile(rf"\b(?:{_MONTH_ALT})\s+\d{{1,2}},?\s+\d{{4}}\b", re.IGNORECASE),
    re.compile(rf"\b\d{{1,2}}\s+(?:{_MONTH_ALT})\s+\d{{4}}\b", re.IGNORECASE),
    re.compile(rf"\b(?:{_MONTH_ALT})\s+\d{{4}}\b", re.IGNORECASE),
    re.compile(r"\b\d{4}-\d{2}-\d{2}\b"),
    re.compile(r"\b\d{1,2}/\d{1,2}/\d{2,4}\b"),
]

# Deterministic winner when two tables claim the same surface.
_LABEL_PRIORITY = {
    "LOCATION": 0,
    "GPE": 0,
    "PERSON": 1,
    "ORGANIZATION": 2,
    "DATE": 3,
    "TIME": 4,
}

DEFAULT_LEXICON_DIR = Path(__file__).parent / "data" / "gazetteer"


def load_lexicon(lexicon_dir: Path) -> dict[tuple[str, ...], str]:
    """Read every *.tsv table in a directory: one "surface<TAB>LABEL" per line."""
    entries: dict[tuple[str, ...], str] = {}
    for path in sorted(lexicon_dir.glob("*.tsv")):
        for line in path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            surface, _, label = line.partition("\t")
            if not label:
                continue
            key = tuple(surface.casefold().split())
            label = label.strip()
            prev = entries.get(key)
            if prev is None or _LABEL_PRIORITY.get(label, 9) < _LABEL_PRIORITY.get(prev, 9):
                entries[key] = label
    return entries


class GazetteerNer:
    """Deterministic lexicon + regex recognizer used as the hermetic reference.

    Matching is longest-match, left-to-right, non-overlapping, and
    case-insensitive; entity text always equals the exact source slice.
    """

    def __init__(self, lexicon_dir: Path | None = None, name: str = "gazetteer-v1"):
        self.name = name
        self.supported_languages = frozenset({"*"})
        self._lexicon = load_lexicon(lexicon_dir or DEFAULT_LEXICON_DIR)
        self._max_words = max((len(k) for k in self._lexicon), default=1)

    def recognize(self, text: str, language: str) -> list[Entity]:
        if not text:
            return []
        candidates: list[tuple[int, int, int, str]] = []

        tokens = [(m.start(), m.end(), m.group().casefold()) for m in _WORD_RE.finditer(text)]
        for i in range(len(tokens)):
            for n in range(min(self._max_words, len(tokens) - i), 0, -1):
                window = tokens[i : i + n]
                label = self._lexicon.get(tuple(w for _, _, w in window))
                if label is not None:
                    start, end = window[0][0], window[-1][1]
                    candidates.append((start, end, _LABEL_PRIORITY.get(label, 9), label))

        for pattern in _DATE_PATTERNS:
            for m in pattern.finditer(text):
                candidates.append((m.start(), m.end(), _LABEL_PRIORITY["DATE"], "DATE"))

        # Leftmost-longest sweep; priority breaks exact ties.
        candidates.sort(key=lambda c: (c[0], -(c[1] - c[0]), c[2]))
        entities: list[Entity] = []
        cursor = 0
        for start, end, _, label in candidates:
            if start >= cursor:
                entities.append(Entity(text=text[start:end], label=label, start=start, end=end))
                cursor = end
        return entities


def bundle_statistics(bundles: Iterable[FeatureBundle]) -> dict[str, dict[str, float]]:
    """Span counts and fallback rates per metric, for diagnostics."""
    per_metric: dict[str, list[FeatureBundle]] = {}
    for b in bundles:
        per_metric.setdefault(b.metric.value, []).append(b)
    stats = {}
    for metric, group in sorted(per_metric.items()):
        n = len(group)
        stats[metric] = {
            "bundles": float(n),
            "mean_spans": sum(len(b.spans) for b in group) / n,
            "fallback_rate": sum(b.fallback_used for b in group) / n,
        }
    return stats
