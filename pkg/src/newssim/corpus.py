"""Article ingestion, cleaning, persistence, pair loading, and splits.

Articles arrive as HTML, leave as JSON records with a junk-trimmed body.
Pair datasets are CSV; raw [1,4] dissimilarity scores are normalized to
[0,1] similarity via (4 - raw) / 3.
"""

from __future__ import annotations

import csv
import json
import logging
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from html.parser import HTMLParser
from pathlib import Path
from urllib.parse import urlsplit

import numpy as np
import requests

from .errors import (
    EmptyBodyError,
    EmptyDatasetError,
    FetchError,
    FormatError,
    NotFoundError,
    RangeError,
)
from .features import MetricKind

logger = logging.getLogger(__name__)

RAW_MIN, RAW_MAX = 1.0, 4.0

# Body text is cut at the first occurrence of any of these (casefolded
# substring match): a reproducible stand-in for manual junk removal.
DEFAULT_JUNK_MARKERS = (
    "related articles",
    "related stories",
    "read more:",
    "sign up for our newsletter",
    "all rights reserved",
    "copyright ©",
    "advertisement",
    "click here to subscribe",
)

STOPWORD_DIR = Path(__file__).parent / "data" / "stopwords"


@dataclass
class ArticleRecord:
    """One cleaned news article."""

    id: str
    url: str
    language: str
    title: str
    headings: list[str]
    body: str
    fetched_at: datetime

    def __post_init__(self) -> None:
        if not self.body:
            raise EmptyBodyError(f"article {self.id!r} has an empty body")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "url": self.url,
            "language": self.language,
            "title": self.title,
            "headings": list(self.headings),
            "body": self.body,
            "fetched_at": self.fetched_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArticleRecord":
        return cls(
            id=d["id"],
            url=d["url"],
            language=d["language"],
            title=d["title"],
            headings=list(d["headings"]),
            body=d["body"],
            fetched_at=datetime.fromisoformat(d["fetched_at"]),
        )


@dataclass
class PairRecord:
    """An article pair with its seven raw scores (1 most similar, 4 least)."""

    pair_id: str
    article1_id: str
    article2_id: str
    lang_pair: str
    raw_scores: dict[MetricKind, float]

    def __post_init__(self) -> None:
        missing = [m.value for m in MetricKind if m not in self.raw_scores]
        if missing:
            raise ValueError(f"pair {self.pair_id!r} missing scores: {missing}")
        for metric, score in self.raw_scores.items():
            if not (RAW_MIN <= score <= RAW_MAX):
                raise RangeError(
                    f"pair {self.pair_id!r} {metric.value} score {score} outside [1, 4]"
                )


@dataclass
class NormalizedPair:
    pair_id: str
    scores: dict[MetricKind, float]

    def __post_init__(self) -> None:
        for metric, score in self.scores.items():
            if not (0.0 <= score <= 1.0):
                raise RangeError(
                    f"pair {self.pair_id!r} {metric.value} normalized score {score} outside [0, 1]"
                )


@dataclass
class DatasetSplit:
    train: list[str]
    test: list[str]
    seed: int
    ratio: float


@dataclass
class LoadReport:
    total_rows: int = 0
    loaded: int = 0
    skipped_missing_scores: int = 0
    skipped_unavailable_articles: int = 0
    language_histogram: Counter = field(default_factory=Counter)

    def as_dict(self) -> dict:
        return {
            "total_rows": self.total_rows,
            "loaded": self.loaded,
            "skipped_missing_scores": self.skipped_missing_scores,
            "skipped_unavailable_articles": self.skipped_unavailable_articles,
            "language_histogram": dict(sorted(self.language_histogram.items())),
        }


# --------------------------------------------------------------------------
# Fetching
# --------------------------------------------------------------------------


@dataclass
class FetchPolicy:
    concurrency: int = 4
    retries: int = 2
    timeout_s: float = 10.0
    min_delay_s: float = 0.5


class ArticleFetcher:
    """HTTP fetcher with per-host serialization and a per-host minimum delay.

    Safe to share across the bounded worker pool used by ingest.
    """

    def __init__(self, policy: FetchPolicy | None = None):
        self.policy = policy or FetchPolicy()
        self._registry_lock = threading.Lock()
        self._host_locks: dict[str, threading.Lock] = {}
        self._last_request: dict[str, float] = {}

    def _host_lock(self, host: str) -> threading.Lock:
        with self._registry_lock:
            return self._host_locks.setdefault(host, threading.Lock())

    def fetch(self, url: str) -> bytes:
        parts = urlsplit(url)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise FetchError(url, reason="not a well-formed http(s) url")
        host = parts.netloc

        with self._host_lock(host):
            wait = self.policy.min_delay_s - (time.monotonic() - self._last_request.get(host, -1e9))
            if wait > 0:
                time.sleep(wait)
            self._last_request[host] = time.monotonic()

            last_status: int | None = None
            last_reason = ""
            for _ in range(self.policy.retries + 1):
                try:
                    resp = requests.get(url, timeout=self.policy.timeout_s)
                except requests.RequestException as exc:
                    last_status, last_reason = None, type(exc).__name__
                    continue
                if 200 <= resp.status_code < 300:
                    return resp.content
                last_status, last_reason = resp.status_code, ""
            raise FetchError(url, status=last_status, reason=last_reason)


def fetch_article(url: str, politeness: FetchPolicy | None = None) -> bytes:
    """One-shot fetch honoring retry and delay policy."""
    return ArticleFetcher(politeness).fetch(url)


# --------------------------------------------------------------------------
# HTML extraction
# --------------------------------------------------------------------------

_SKIP_TAGS = {"script", "style", "nav", "footer"}
_HEADING_TAGS = {"h1", "h2", "h3", "h4", "h5", "h6"}


class _ArticleHTMLParser(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.headings: list[tuple[str, str]] = []  # (tag, text)
        self.paragraphs: list[str] = []
        self._skip_depth = 0
        self._heading_tag: str | None = None
        self._buffer: list[str] = []
        self._in_paragraph = False

    def handle_starttag(self, tag: str, attrs) -> None:
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
        elif self._skip_depth == 0 and tag in _HEADING_TAGS:
            self._flush()
            self._heading_tag = tag
        elif self._skip_depth == 0 and tag == "p":
            self._flush()
            self._in_paragraph = True

    def handle_endtag(self, tag: str) -> None:
        if tag in _SKIP_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)
        elif tag in _HEADING_TAGS and self._heading_tag == tag:
            text = _normalize_ws("".join(self._buffer))
            if text:
                self.headings.append((tag, text))
            self._heading_tag = None
            self._buffer = []
        elif tag == "p" and self._in_paragraph:
            text = _normalize_ws("".join(self._buffer))
            if text:
                self.paragraphs.append(text)
            self._in_paragraph = False
            self._buffer = []

    def handle_data(self, data: str) -> None:
        if self._skip_depth == 0 and (self._heading_tag or self._in_paragraph):
            self._buffer.append(data)

    def _flush(self) -> None:
        # Unclosed heading or paragraph: commit what we have.
        if self._heading_tag:
            self.handle_endtag(self._heading_tag)
        if self._in_paragraph:
            self.handle_endtag("p")


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def trim_junk_suffix(body: str, junk_markers=DEFAULT_JUNK_MARKERS) -> str:
    """Truncate at the first junk marker occurrence (casefolded substring)."""
    folded = body.casefold()
    cut = len(body)
    for marker in junk_markers:
        idx = folded.find(marker.casefold())
        if idx != -1:
            cut = min(cut, idx)
    return body[:cut].rstrip()


def extract_article(
    html: bytes,
    id: str,
    url: str,
    language: str = "en",
    junk_markers=DEFAULT_JUNK_MARKERS,
    fetched_at: datetime | None = None,
) -> ArticleRecord:
    """Pull title, headings, and paragraph body text out of an HTML document.

    Title is the first h1 (first heading of any level if no h1 exists);
    body is paragraph text joined with single newlines, with script/style/
    nav/footer content dropped and the junk suffix trimmed.
    """
    text = html.decode("utf-8", errors="replace")
    parser = _ArticleHTMLParser()
    parser.feed(text)
    parser.close()
    parser._flush()

    headings = [t for _, t in parser.headings]
    title = ""
    for tag, heading in parser.headings:
        if tag == "h1":
            title = heading
            break
    if not title and headings:
        title = headings[0]

    body = trim_junk_suffix("\n".join(parser.paragraphs), junk_markers)
    if not body:
        raise EmptyBodyError(f"no extractable paragraph text in article {id!r}")

    return ArticleRecord(
        id=id,
        url=url,
        language=language,
        title=title,
        headings=headings,
        body=body,
        fetched_at=fetched_at or datetime.now(timezone.utc),
    )


# --------------------------------------------------------------------------
# Stopwords
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _stopword_set(language: str) -> frozenset[str] | None:
    path = STOPWORD_DIR / f"{language}.txt"
    if not path.exists():
        return None
    words = {
        line.strip().casefold()
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    }
    return frozenset(words)


def remove_stopwords(text: str, language: str) -> str:
    """Drop stopword tokens (matched casefolded); surviving tokens keep their
    original casing and order, joined by single spaces. Unknown languages
    degrade to the identity with a warning."""
    stopwords = _stopword_set(language)
    if stopwords is None:
        logger.warning("no stopword list for language %r; text left unchanged", language)
        return text
    kept = [tok for tok in text.split() if tok.casefold() not in stopwords]
    return " ".join(kept)


# --------------------------------------------------------------------------
# Scores and pair loading
# --------------------------------------------------------------------------


def normalize_score(raw: float) -> float:
    """Map the [1,4] dissimilarity scale to [0,1] similarity: (4 - raw) / 3."""
    if not (RAW_MIN <= raw <= RAW_MAX):
        raise RangeError(f"raw score {raw} outside [{RAW_MIN}, {RAW_MAX}]")
    return (RAW_MAX - raw) / (RAW_MAX - RAW_MIN)


def denormalize_score(score: float) -> float:
    """Inverse of normalize_score: raw = 4 - 3 * score."""
    if not (0.0 <= score <= 1.0):
        raise RangeError(f"normalized score {score} outside [0, 1]")
    return RAW_MAX - (RAW_MAX - RAW_MIN) * score


def normalize_pair(pair: PairRecord) -> NormalizedPair:
    return NormalizedPair(
        pair_id=pair.pair_id,
        scores={m: normalize_score(s) for m, s in pair.raw_scores.items()},
    )


_BASE_COLUMNS = ("pair_id", "url1", "url2", "id1", "id2", "lang1", "lang2")
SCORE_COLUMNS: dict[str, MetricKind] = {
    "geography": MetricKind.GEOGRAPHY,
    "entities": MetricKind.ENTITIES,
    "time": MetricKind.TIME,
    "narrative": MetricKind.NARRATIVE,
    "overall": MetricKind.OVERALL,
    "style": MetricKind.STYLE,
    "tone": MetricKind.TONE,
}


def load_pairs(
    path: Path | str,
    available_ids: set[str] | None = None,
    column_map: dict[str, str] | None = None,
) -> tuple[list[PairRecord], LoadReport]:
    """Read a pair dataset CSV.

    Rows with blank, unparseable, or out-of-range scores are skipped, as are
    rows referencing articles absent from available_ids (when given); both
    kinds are counted in the report rather than aborting the load.
    """
    column_map = column_map or {}
    col = lambda logical: column_map.get(logical, logical)

    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read pairs CSV {path}: {exc}") from exc

    report = LoadReport()
    pairs: list[PairRecord] = []
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        required = [col(c) for c in _BASE_COLUMNS] + [col(c) for c in SCORE_COLUMNS]
        missing = [c for c in required if c not in header]
        if missing:
            raise FormatError(f"pairs CSV {path} missing columns: {missing}")

        for row in reader:
            report.total_rows += 1
            raw_scores: dict[MetricKind, float] = {}
            ok = True
            for name, metric in SCORE_COLUMNS.items():
                cell = (row.get(col(name)) or "").strip()
                try:
                    value = float(cell)
                except ValueError:
                    ok = False
                    break
                if not (RAW_MIN <= value <= RAW_MAX):
                    ok = False
                    break
                raw_scores[metric] = value
            if not ok:
                report.skipped_missing_scores += 1
                continue

            id1, id2 = row[col("id1")].strip(), row[col("id2")].strip()
            if available_ids is not None and (id1 not in available_ids or id2 not in available_ids):
                report.skipped_unavailable_articles += 1
                continue

            lang_pair = f"{row[col('lang1')].strip()}-{row[col('lang2')].strip()}"
            pairs.append(
                PairRecord(
                    pair_id=row[col("pair_id")].strip(),
                    article1_id=id1,
                    article2_id=id2,
                    lang_pair=lang_pair,
                    raw_scores=raw_scores,
                )
            )
            report.loaded += 1
            report.language_histogram[lang_pair] += 1

    return pairs, report


def split_dataset(pairs: list[PairRecord], ratio: float, seed: int) -> DatasetSplit:
    """Seeded-permutation split; the first floor(ratio * N) pairs train."""
    if not (0.0 < ratio < 1.0):
        raise RangeError(f"split ratio {ratio} outside (0, 1)")
    if not pairs:
        raise EmptyDatasetError("cannot split an empty pair list")
    ids = [p.pair_id for p in pairs]
    perm = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(np.floor(ratio * len(ids)))
    train = [ids[i] for i in perm[:n_train]]
    test = [ids[i] for i in perm[n_train:]]
    return DatasetSplit(train=train, test=test, seed=seed, ratio=ratio)


# --------------------------------------------------------------------------
# Article store
# --------------------------------------------------------------------------


def store_article(record: ArticleRecord, store_dir: Path | str) -> Path:
    """Persist as <id>.json; a second store for the same id replaces the first."""
    store_dir = Path(store_dir)
    store_dir.mkdir(parents=True, exist_ok=True)
    path = store_dir / f"{record.id}.json"
    path.write_text(
        json.dumps(record.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8"
    )
    return path


def load_article(store_dir: Path | str, article_id: str) -> ArticleRecord:
    path = Path(store_dir) / f"{article_id}.json"
    if not path.exists():
        raise NotFoundError(f"article {article_id!r} not in store {store_dir}")
    return ArticleRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))


def list_article_ids(store_dir: Path | str) -> list[str]:
    return sorted(p.stem for p in Path(store_dir).glob("*.json"))
