"""Stage orchestration: ingest, features, embed, split, train, evaluate.

Every stage writes its artifacts under the run's output directory and the
whole run is reproducible byte-for-byte from (corpus, config): iteration
orders are sorted or seeded, and no pipeline artifact embeds a timestamp.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import _kernels
from .corpus import (
    ArticleFetcher,
    ArticleRecord,
    DatasetSplit,
    FetchPolicy,
    NormalizedPair,
    PairRecord,
    extract_article,
    list_article_ids,
    load_article,
    load_pairs,
    normalize_pair,
    remove_stopwords,
    split_dataset,
    store_article,
)
from .embedding import (
    DEFAULT_MAX_TOKENS,
    CacheProvider,
    StubProvider,
    baseline_score,
    concat,
    embed_bundle,
    mean_pool,
    read_cache,
    span_key,
    truncate_tokens,
    write_cache,
)
from .errors import FormatError, NewssimError
from .evaluation import DEFAULT_TOLERANCES, EvalReport, build_report, write_report
from .features import (
    DEFAULT_LEXICON_DIR,
    FeatureBundle,
    GazetteerNer,
    MetricKind,
    extract_features,
    write_bundle,
)
from .model import RegressionHead, TrainConfig, forward, init_head, load_head, save_head, train

_BASE_CSV_COLUMNS = ("pair_id", "url1", "url2", "id1", "id2", "lang1", "lang2")


# --------------------------------------------------------------------------
# Run configuration
# --------------------------------------------------------------------------


@dataclass
class RunConfig:
    pairs_csv: Path
    article_store: Path
    output_dir: Path
    provider: str = "stub"
    stub_dim: int = 384
    stub_seed: int = 13
    ner: str = "gazetteer"
    split_ratio: float = 0.67
    split_seed: int = 0
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    tolerances: tuple[float, ...] = DEFAULT_TOLERANCES

    @classmethod
    def from_file(cls, path: Path | str, overrides: dict | None = None) -> "RunConfig":
        """Load the run config JSON; flag overrides win over file values."""
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read config {path}: {exc}") from exc
        for key, value in (overrides or {}).items():
            section, _, leaf = key.partition(".")
            if leaf:
                raw.setdefault(section, {})[leaf] = value
            else:
                raw[section] = value

        split = raw.get("split", {})
        train_raw = raw.get("train", {})
        if "seed" not in split or "seed" not in train_raw:
            raise FormatError("config must pin split.seed and train.seed explicitly")
        for required in ("pairs_csv", "article_store", "output_dir"):
            if required not in raw:
                raise FormatError(f"config is missing {required!r}")

        stub = raw.get("stub", {})
        cfg = cls(
            pairs_csv=Path(raw["pairs_csv"]),
            article_store=Path(raw["article_store"]),
            output_dir=Path(raw["output_dir"]),
            provider=raw.get("provider", "stub"),
            stub_dim=int(stub.get("dim", 384)),
            stub_seed=int(stub.get("seed", 13)),
            ner=raw.get("ner", "gazetteer"),
            split_ratio=float(split.get("ratio", 0.67)),
            split_seed=int(split["seed"]),
            train=TrainConfig(
                learning_rate=float(train_raw.get("learning_rate", 0.01)),
                momentum=float(train_raw.get("momentum", 0.9)),
                epochs=int(train_raw.get("epochs", 8)),
                seed=int(train_raw["seed"]),
                shuffle=bool(train_raw.get("shuffle", True)),
            ),
            tolerances=tuple(float(t) for t in raw.get("tolerances", DEFAULT_TOLERANCES)),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.pairs_csv.exists():
            raise FormatError(f"pairs_csv does not exist: {self.pairs_csv}")
        if not self.article_store.exists():
            raise FormatError(f"article_store does not exist: {self.article_store}")
        if self.provider != "stub" and not self.provider.startswith("cache:"):
            raise FormatError(f"provider must be 'stub' or 'cache:<path>', got {self.provider!r}")
        if self.provider.startswith("cache:") and not Path(self.provider[6:]).exists():
            raise FormatError(f"embedding cache does not exist: {self.provider[6:]}")
        if self.ner != "gazetteer" and not self.ner.startswith("gazetteer:"):
            raise FormatError(f"ner must be 'gazetteer' or 'gazetteer:<dir>', got {self.ner!r}")
        if self.ner.startswith("gazetteer:") and not Path(self.ner[10:]).exists():
            raise FormatError(f"gazetteer lexicon dir does not exist: {self.ner[10:]}")

    def build_provider(self):
        if self.provider == "stub":
            return StubProvider(dim=self.stub_dim, seed=self.stub_seed)
        return CacheProvider(self.provider[6:])

    def build_ner(self) -> GazetteerNer:
        if self.ner == "gazetteer":
            return GazetteerNer(DEFAULT_LEXICON_DIR)
        return GazetteerNer(Path(self.ner[10:]))


# --------------------------------------------------------------------------
# Ingest
# --------------------------------------------------------------------------


@dataclass
class IngestReport:
    fetched: int = 0
    skipped_existing: int = 0
    failures: list[dict] = dataclasses.field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "fetched": self.fetched,
            "skipped_existing": self.skipped_existing,
            "failures": sorted(self.failures, key=lambda f: f["id"]),
        }


def _read_article_refs(pairs_csv: Path) -> list[tuple[str, str, str]]:
    """Unique (id, url, language) triples referenced by the pairs CSV."""
    import csv as _csv

    try:
        handle = open(pairs_csv, newline="", encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read pairs CSV {pairs_csv}: {exc}") from exc
    refs: dict[str, tuple[str, str, str]] = {}
    with handle:
        reader = _csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [c for c in _BASE_CSV_COLUMNS if c not in header]
        if missing:
            raise FormatError(f"pairs CSV {pairs_csv} missing columns: {missing}")
        for row in reader:
            for side in ("1", "2"):
                aid = row[f"id{side}"].strip()
                if aid and aid not in refs:
                    refs[aid] = (aid, row[f"url{side}"].strip(), row[f"lang{side}"].strip())
    return [refs[k] for k in sorted(refs)]


def ingest(
    pairs_csv: Path | str,
    out_dir: Path | str,
    policy: FetchPolicy | None = None,
) -> IngestReport:
    """Fetch, extract, stopword-clean, and store every article the CSV
    references. Individual failures are recorded, never fatal; rerunning
    over an existing store leaves already-stored articles untouched."""
    out_dir = Path(out_dir)
    store_dir = out_dir / "articles"
    store_dir.mkdir(parents=True, exist_ok=True)
    policy = policy or FetchPolicy()
    fetcher = ArticleFetcher(policy)
    report = IngestReport()

    refs = _read_article_refs(Path(pairs_csv))
    todo = []
    for aid, url, lang in refs:
        if (store_dir / f"{aid}.json").exists():
            report.skipped_existing += 1
        else:
            todo.append((aid, url, lang))

    def worker(ref: tuple[str, str, str]) -> tuple[str, ArticleRecord | None, str]:
        aid, url, lang = ref
        try:
            html = fetcher.fetch(url)
            record = extract_article(html, id=aid, url=url, language=lang)
            body = remove_stopwords(record.body, lang)
            record = dataclasses.replace(record, body=body)
            return aid, record, ""
        except NewssimError as exc:
            return aid, None, str(exc)

    with concurrent.futures.ThreadPoolExecutor(max_workers=policy.concurrency) as pool:
        results = list(pool.map(worker, todo))

    for aid, record, error in sorted(results, key=lambda r: r[0]):
        if record is None:
            report.failures.append({"id": aid, "error": error})
        else:
            store_article(record, store_dir)
            report.fetched += 1

    (out_dir / "ingest_report.json").write_text(
        json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return report


# --------------------------------------------------------------------------
# Stages
# --------------------------------------------------------------------------

Bundles = dict[tuple[str, MetricKind], FeatureBundle]


def stage_features(cfg: RunConfig, article_ids: Iterable[str]) -> Bundles:
    ner = cfg.build_ner()
    out = cfg.output_dir / "features"
    bundles: Bundles = {}
    for aid in sorted(article_ids):
        article = load_article(cfg.article_store, aid)
        for metric in MetricKind:
            bundle = extract_features(article, metric, ner)
            write_bundle(out, aid, ner.name, bundle)
            bundles[(aid, metric)] = bundle
    return bundles


def pooled_cache_key(article_id: str, metric: MetricKind) -> str:
    return hashlib.sha256(f"{article_id}\x1f{metric.value}".encode("utf-8")).hexdigest()


Pooled = dict[tuple[str, MetricKind], np.ndarray]


def stage_embed(cfg: RunConfig, bundles: Bundles) -> Pooled:
    provider = cfg.build_provider()
    entries: dict[str, np.ndarray] = {}
    for (aid, metric) in sorted(bundles, key=lambda k: (k[0], k[1].value)):
        vector = mean_pool(embed_bundle(bundles[(aid, metric)], provider))
        entries[pooled_cache_key(aid, metric)] = vector
    path = write_cache(cfg.output_dir / "embeddings" / "pooled.tsv", entries, provider.name)
    # Reread through the cache format so later stages see exactly what any
    # stage-by-stage rerun would read back from disk.
    stored, _, _ = read_cache(path)
    return {
        (aid, metric): stored[pooled_cache_key(aid, metric)]
        for (aid, metric) in bundles
    }


def export_requests(cfg: RunConfig, bundles: Bundles, path: Path | str | None = None) -> Path:
    """Write the deduplicated {key, text} JSON-lines request file covering
    every post-truncation span, the input contract of the cache exporter."""
    provider_max = DEFAULT_MAX_TOKENS
    requests: dict[str, str] = {}
    for bundle in bundles.values():
        for span in bundle.spans:
            text = truncate_tokens(span, provider_max)
            requests[span_key(text)] = text
    path = Path(path) if path else cfg.output_dir / "embeddings" / "requests.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        json.dumps({"key": key, "text": requests[key]}, ensure_ascii=False)
        for key in sorted(requests)
    ]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


def stage_split(cfg: RunConfig, pairs: list[PairRecord]) -> DatasetSplit:
    split = split_dataset(pairs, cfg.split_ratio, cfg.split_seed)
    payload = {
        "ratio": split.ratio,
        "seed": split.seed,
        "train": split.train,
        "test": split.test,
    }
    (cfg.output_dir / "split.json").write_text(
        json.dumps(payload, indent=2) + "\n", encoding="utf-8"
    )
    return split


def _pair_example(
    pair: NormalizedPair,
    by_id: dict[str, PairRecord],
    pooled: Pooled,
    metric: MetricKind,
) -> tuple[np.ndarray, float]:
    record = by_id[pair.pair_id]
    x = concat(
        pooled[(record.article1_id, metric)],
        pooled[(record.article2_id, metric)],
    )
    return x, pair.scores[metric]


def stage_train(
    cfg: RunConfig,
    pairs: list[PairRecord],
    normalized: dict[str, NormalizedPair],
    pooled: Pooled,
    split: DatasetSplit,
) -> dict[MetricKind, RegressionHead]:
    by_id = {p.pair_id: p for p in pairs}
    input_dim = 2 * next(iter(pooled.values())).shape[0]
    heads: dict[MetricKind, RegressionHead] = {}
    ckpt_dir = cfg.output_dir / "checkpoints"
    for metric in MetricKind:
        examples = [
            _pair_example(normalized[pid], by_id, pooled, metric) for pid in split.train
        ]
        head = init_head(metric, input_dim, cfg.train.seed)
        trained, history = train(head, examples, cfg.train)
        save_head(ckpt_dir / f"{metric.value}.json", trained, cfg.train, history)
        heads[metric] = trained
    return heads


def stage_evaluate(
    cfg: RunConfig,
    pairs: list[PairRecord],
    normalized: dict[str, NormalizedPair],
    pooled: Pooled,
    split: DatasetSplit,
    heads: dict[MetricKind, RegressionHead],
) -> EvalReport:
    by_id = {p.pair_id: p for p in pairs}
    scored = {}
    for metric in MetricKind:
        targets = [normalized[pid].scores[metric] for pid in split.test]
        base_preds = []
        ffn_preds = []
        for pid in split.test:
            record = by_id[pid]
            v1 = pooled[(record.article1_id, metric)]
            v2 = pooled[(record.article2_id, metric)]
            base_preds.append(baseline_score(v1, v2))
            ffn_preds.append(forward(heads[metric], concat(v1, v2)))
        scored[metric] = {
            "baseline-cosine": (base_preds, targets),
            "ffn": (ffn_preds, targets),
        }
    report = build_report(scored, cfg.tolerances)
    write_report(report, cfg.output_dir / "report.json", cfg.output_dir / "report.txt")
    return report


# --------------------------------------------------------------------------
# Full pipeline
# --------------------------------------------------------------------------

PIPELINE_STAGES = ("load", "features", "embed", "split", "train", "evaluate")


def run_pipeline(cfg: RunConfig) -> dict:
    """Run every stage in order, recording progress in a MANIFEST that
    survives a mid-run failure with the failed stage named."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "backend": _kernels.backend_name(),
        "stages": {},
        "failed_stage": None,
    }
    manifest_path = cfg.output_dir / "MANIFEST.json"

    def save_manifest() -> None:
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    stage = "load"
    try:
        available = set(list_article_ids(cfg.article_store))
        pairs, load_report = load_pairs(cfg.pairs_csv, available_ids=available)
        if not pairs:
            raise FormatError(f"no usable pairs in {cfg.pairs_csv}")
        normalized = {p.pair_id: normalize_pair(p) for p in pairs}
        (cfg.output_dir / "load_report.json").write_text(
            json.dumps(load_report.as_dict(), indent=2) + "\n", encoding="utf-8"
        )
        manifest["stages"]["load"] = {"pairs": len(pairs)}

        stage = "features"
        article_ids = sorted(
            {p.article1_id for p in pairs} | {p.article2_id for p in pairs}
        )
        bundles = stage_features(cfg, article_ids)
        manifest["stages"]["features"] = {"bundles": len(bundles)}

        stage = "embed"
        pooled = stage_embed(cfg, bundles)
        manifest["stages"]["embed"] = {"vectors": len(pooled)}

        stage = "split"
        split = stage_split(cfg, pairs)
        manifest["stages"]["split"] = {"train": len(split.train), "test": len(split.test)}

        stage = "train"
        heads = stage_train(cfg, pairs, normalized, pooled, split)
        manifest["stages"]["train"] = {"heads": len(heads)}

        stage = "evaluate"
        report = stage_evaluate(cfg, pairs, normalized, pooled, split, heads)
        manifest["stages"]["evaluate"] = {"cells": len(report.cells)}
    except Exception:
        manifest["failed_stage"] = stage
        save_manifest()
        raise

    save_manifest()
    return manifest


# --------------------------------------------------------------------------
# Predict
# --------------------------------------------------------------------------


def predict_articles(
    checkpoint_dir: Path | str,
    article1: ArticleRecord,
    article2: ArticleRecord,
    provider,
    ner: GazetteerNer,
) -> dict:
    """Score one article pair with the trained heads; also reports the raw
    baseline cosines and which metrics fell back to full text."""
    heads: dict[MetricKind, RegressionHead] = {}
    for metric in MetricKind:
        head, _, _ = load_head(Path(checkpoint_dir) / f"{metric.value}.json")
        heads[metric] = head

    result = {"scores": {}, "baseline": {}, "fallback_used": {}}
    for metric in MetricKind:
        b1 = extract_features(article1, metric, ner)
        b2 = extract_features(article2, metric, ner)
        v1 = mean_pool(embed_bundle(b1, provider))
        v2 = mean_pool(embed_bundle(b2, provider))
        result["scores"][metric.value] = forward(heads[metric], concat(v1, v2))
        result["baseline"][metric.value] = baseline_score(v1, v2)
        result["fallback_used"][metric.value] = b1.fallback_used or b2.fallback_used
    return result
