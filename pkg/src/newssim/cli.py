"""Command-line entry points for the similarity engine.

Exit codes: 0 success, 2 input error, 3 missing artifact, 4 stage failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import pipeline as pl
from .corpus import FetchPolicy, load_article, load_pairs, normalize_pair
from .errors import (
    ArgumentError,
    FormatError,
    NewssimError,
    NotFoundError,
    RangeError,
)
from .evaluation import EvalReport
from .features import MetricKind, read_bundle

EXIT_INPUT = 2
EXIT_MISSING = 3
EXIT_STAGE = 4


def _fail(exc: Exception) -> "click.exceptions.Exit":
    if isinstance(exc, NotFoundError):
        code = EXIT_MISSING
    elif isinstance(exc, (FormatError, RangeError, ArgumentError, ValueError)):
        code = EXIT_INPUT
    else:
        code = EXIT_STAGE
    click.echo(f"error: {exc}", err=True)
    return click.exceptions.Exit(code)


def _parse_overrides(pairs: tuple[str, ...]) -> dict:
    overrides = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep:
            raise click.BadParameter(f"--set expects key=value, got {item!r}")
        try:
            overrides[key] = json.loads(value)
        except json.JSONDecodeError:
            overrides[key] = value
    return overrides


def _load_config(config_path: str, set_pairs: tuple[str, ...]) -> pl.RunConfig:
    return pl.RunConfig.from_file(config_path, _parse_overrides(set_pairs))


config_option = click.option(
    "-c", "--config", "config_path", required=True, type=click.Path(), help="Run config JSON."
)
set_option = click.option(
    "--set", "set_pairs", multiple=True, metavar="KEY=VALUE",
    help="Override a config field, e.g. --set train.epochs=12 (flags > file > defaults).",
)


@click.group()
def main() -> None:
    """News-article pair similarity: ingest, score, train, evaluate."""


@main.command()
@click.argument("pairs_csv", type=click.Path())
@click.argument("out_dir", type=click.Path())
@click.option("--concurrency", default=4, show_default=True)
@click.option("--retries", default=2, show_default=True)
@click.option("--timeout", "timeout_s", default=10.0, show_default=True)
@click.option("--min-delay", "min_delay_s", default=0.5, show_default=True,
              help="Per-host minimum delay between requests, seconds.")
def ingest(pairs_csv, out_dir, concurrency, retries, timeout_s, min_delay_s):
    """Fetch and clean every article referenced by PAIRS_CSV into OUT_DIR."""
    policy = FetchPolicy(
        concurrency=concurrency, retries=retries, timeout_s=timeout_s, min_delay_s=min_delay_s
    )
    try:
        report = pl.ingest(pairs_csv, out_dir, policy)
    except (NewssimError, ValueError) as exc:
        raise _fail(exc)
    click.echo(json.dumps(report.as_dict(), indent=2))


def _load_inputs(cfg: pl.RunConfig):
    from .corpus import list_article_ids

    available = set(list_article_ids(cfg.article_store))
    pairs, _ = load_pairs(cfg.pairs_csv, available_ids=available)
    if not pairs:
        raise FormatError(f"no usable pairs in {cfg.pairs_csv}")
    article_ids = sorted({p.article1_id for p in pairs} | {p.article2_id for p in pairs})
    return pairs, article_ids


@main.command()
@config_option
@set_option
def features(config_path, set_pairs):
    """Extract per-metric feature bundles for every referenced article."""
    try:
        cfg = _load_config(config_path, set_pairs)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        pairs, article_ids = _load_inputs(cfg)
        bundles = pl.stage_features(cfg, article_ids)
    except (NewssimError, ValueError) as exc:
        raise _fail(exc)
    click.echo(f"wrote {len(bundles)} bundles to {cfg.output_dir / 'features'}")


def _read_bundles(cfg: pl.RunConfig, article_ids) -> pl.Bundles:
    ner_name = cfg.build_ner().name
    bundles: pl.Bundles = {}
    for aid in article_ids:
        for metric in MetricKind:
            bundles[(aid, metric)] = read_bundle(
                cfg.output_dir / "features", aid, metric, ner_name
            )
    return bundles


@main.command()
@config_option
@set_option
@click.option("--export-requests", "export_path", is_flag=False, flag_value="", default=None,
              help="Write the exporter request JSONL instead of embedding "
                   "(optionally to the given path).")
def embed(config_path, set_pairs, export_path):
    """Embed and mean-pool every feature bundle (requires features output)."""
    try:
        cfg = _load_config(config_path, set_pairs)
        pairs, article_ids = _load_inputs(cfg)
        bundles = _read_bundles(cfg, article_ids)
        if export_path is not None:
            target = pl.export_requests(cfg, bundles, export_path or None)
            click.echo(f"wrote embedding requests to {target}")
            return
        pooled = pl.stage_embed(cfg, bundles)
    except (NewssimError, ValueError) as exc:
        raise _fail(exc)
    click.echo(f"wrote {len(pooled)} pooled vectors to {cfg.output_dir / 'embeddings'}")


def _read_pooled(cfg: pl.RunConfig, pairs) -> pl.Pooled:
    from .embedding import read_cache

    path = cfg.output_dir / "embeddings" / "pooled.tsv"
    if not path.exists():
        raise NotFoundError(f"no pooled embeddings at {path}; run the embed stage first")
    entries, _, _ = read_cache(path)
    pooled: pl.Pooled = {}
    article_ids = sorted({p.article1_id for p in pairs} | {p.article2_id for p in pairs})
    for aid in article_ids:
        for metric in MetricKind:
            key = pl.pooled_cache_key(aid, metric)
            if key not in entries:
                raise NotFoundError(f"pooled vector missing for ({aid}, {metric.value})")
            pooled[(aid, metric)] = entries[key]
    return pooled


@main.command()
@config_option
@set_option
def train(config_path, set_pairs):
    """Train the seven regression heads on the train split."""
    try:
        cfg = _load_config(config_path, set_pairs)
        pairs, _ = _load_inputs(cfg)
        pooled = _read_pooled(cfg, pairs)
        normalized = {p.pair_id: normalize_pair(p) for p in pairs}
        split = pl.stage_split(cfg, pairs)
        heads = pl.stage_train(cfg, pairs, normalized, pooled, split)
    except (NewssimError, ValueError) as exc:
        raise _fail(exc)
    click.echo(f"wrote {len(heads)} checkpoints to {cfg.output_dir / 'checkpoints'}")


@main.command()
@config_option
@set_option
def evaluate(config_path, set_pairs):
    """Score the test split with both approaches and write the report."""
    try:
        cfg = _load_config(config_path, set_pairs)
        pairs, _ = _load_inputs(cfg)
        pooled = _read_pooled(cfg, pairs)
        normalized = {p.pair_id: normalize_pair(p) for p in pairs}
        split = pl.stage_split(cfg, pairs)
        heads = {}
        from .model import load_head

        for metric in MetricKind:
            head, _, _ = load_head(cfg.output_dir / "checkpoints" / f"{metric.value}.json")
            heads[metric] = head
        report = pl.stage_evaluate(cfg, pairs, normalized, pooled, split, heads)
    except (NewssimError, ValueError) as exc:
        raise _fail(exc)
    click.echo(report.render_text())


@main.command()
@config_option
@set_option
def report(config_path, set_pairs):
    """Render the stored report JSON as an aligned text table."""
    try:
        cfg = _load_config(config_path, set_pairs)
        path = cfg.output_dir / "report.json"
        if not path.exists():
            raise NotFoundError(f"no report at {path}; run evaluate first")
        loaded = EvalReport.from_json(path.read_text(encoding="utf-8"))
    except (NewssimError, ValueError) as exc:
        raise _fail(exc)
    click.echo(loaded.render_text())


@main.command()
@config_option
@set_option
def pipeline(config_path, set_pairs):
    """Run features, embeddings, split, training, and evaluation end to end."""
    try:
        cfg = _load_config(config_path, set_pairs)
        manifest = pl.run_pipeline(cfg)
    except (NewssimError, ValueError) as exc:
        raise _fail(exc)
    click.echo(json.dumps(manifest, indent=2))


@main.command()
@config_option
@set_option
@click.argument("article1", type=click.Path())
@click.argument("article2", type=click.Path())
@click.option("--checkpoints", "checkpoint_dir", default=None, type=click.Path(),
              help="Checkpoint directory (default: <output_dir>/checkpoints).")
def predict(config_path, set_pairs, article1, article2, checkpoint_dir):
    """Score two article JSON files on all seven similarity dimensions."""
    try:
        cfg = _load_config(config_path, set_pairs)
        ckpt = Path(checkpoint_dir) if checkpoint_dir else cfg.output_dir / "checkpoints"
        rec1 = _read_article_json(Path(article1))
        rec2 = _read_article_json(Path(article2))
        result = pl.predict_articles(ckpt, rec1, rec2, cfg.build_provider(), cfg.build_ner())
    except (NewssimError, ValueError) as exc:
        raise _fail(exc)
    click.echo(json.dumps(result, indent=2))


def _read_article_json(path: Path):
    if not path.exists():
        raise NotFoundError(f"article file {path} does not exist")
    return load_article(path.parent, path.stem)


if __name__ == "__main__":
    main()
