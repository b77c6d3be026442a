import csv
import http.server
import json
import threading
from datetime import datetime, timezone
from pathlib import Path

import pytest

from newssim.corpus import extract_article, remove_stopwords, store_article
from newssim.features import GazetteerNer

FIXTURES = Path(__file__).parent / "fixtures"

FIXED_FETCH_TIME = datetime(2024, 3, 1, 12, 0, 0, tzinfo=timezone.utc)


def _article_languages() -> dict[str, str]:
    langs: dict[str, str] = {}
    with open(FIXTURES / "pairs.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            langs[row["id1"]] = row["lang1"]
            langs[row["id2"]] = row["lang2"]
    return langs


def build_mini_store(store_dir: Path) -> Path:
    """Extract, stopword-clean, and store the bundled mini-corpus articles."""
    langs = _article_languages()
    store_dir.mkdir(parents=True, exist_ok=True)
    for html_path in sorted((FIXTURES / "html").glob("*.html")):
        aid = html_path.stem
        record = extract_article(
            html_path.read_bytes(),
            id=aid,
            url=f"http://news.example/{aid}.html",
            language=langs[aid],
            fetched_at=FIXED_FETCH_TIME,
        )
        cleaned = remove_stopwords(record.body, record.language)
        record = type(record)(
            id=record.id,
            url=record.url,
            language=record.language,
            title=record.title,
            headings=record.headings,
            body=cleaned,
            fetched_at=record.fetched_at,
        )
        store_article(record, store_dir)
    return store_dir


@pytest.fixture(scope="session")
def mini_store(tmp_path_factory) -> Path:
    return build_mini_store(tmp_path_factory.mktemp("store") / "articles")


@pytest.fixture(scope="session")
def gazetteer() -> GazetteerNer:
    return GazetteerNer()


def make_config(
    tmp_path: Path,
    store: Path,
    output_name: str = "out",
    **overrides,
) -> Path:
    """Write a run-config JSON pointing at the mini-corpus."""
    cfg = {
        "pairs_csv": str(FIXTURES / "pairs.csv"),
        "article_store": str(store),
        "output_dir": str(tmp_path / output_name),
        "provider": "stub",
        "stub": {"dim": 64, "seed": 13},
        "ner": "gazetteer",
        "split": {"ratio": 0.67, "seed": 7},
        "train": {"learning_rate": 0.01, "momentum": 0.9, "epochs": 8, "seed": 7, "shuffle": True},
        "tolerances": [0.2, 0.33, 0.5],
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    path = tmp_path / f"{output_name}_config.json"
    path.write_text(json.dumps(cfg, indent=2), encoding="utf-8")
    return path


class FixtureServer:
    """Serves the fixture HTML over a real local socket for fetch tests."""

    def __init__(self, directory: Path):
        handler = lambda *a, **kw: http.server.SimpleHTTPRequestHandler(
            *a, directory=str(directory), **kw
        )
        self.httpd = http.server.ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def base_url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture(scope="session")
def fixture_server():
    server = FixtureServer(FIXTURES / "html")
    yield server
    server.shutdown()


def write_live_csv(dest: Path, base_url: str, break_ids: set[str] = frozenset()) -> Path:
    """Copy pairs.csv with urls rewritten to the live fixture server;
    break_ids get a url that will 404."""
    with open(FIXTURES / "pairs.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    for row in body:
        for url_col, id_col in ((1, 3), (2, 4)):
            aid = row[id_col]
            name = f"{aid}.html" if aid not in break_ids else f"missing-{aid}.html"
            row[url_col] = f"{base_url}/{name}"
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerows([header] + body)
    return dest
