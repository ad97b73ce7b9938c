"""Conduit demo bundle: fixture models, seed data, and binding stubs."""

from __future__ import annotations

import json
from pathlib import Path

from ..model import DomainModel, make_record
from ..values import (
    CollectionVal,
    IntVal,
    RecordVal,
    StringVal,
    Value,
    date_value,
)
from .markdown import render_markdown

DEMO_DIR = Path(__file__).parent
DOMAIN_FILE = DEMO_DIR / "conduit.domain"
ABR_FILE = DEMO_DIR / "conduit.abr"
FLOW_FILE = DEMO_DIR / "conduit.flow"
FIXTURE_FILE = DEMO_DIR / "markdown_fixture.json"
SESSION_FILE = DEMO_DIR / "session_view.json"

BUNDLE_FILES = [str(DOMAIN_FILE), str(ABR_FILE), str(FLOW_FILE)]

SEED_ARTICLES = [
    {
        "slug": "welcome-aboard",
        "title": "Welcome Aboard",
        "description": "First steps on Conduit",
        "body": "**Welcome** to Conduit. Share *your* knowledge.",
        "tagList": ["intro", "community"],
        "createdAt": "2024-01-05T09:30:00Z",
        "favoritesCount": 3,
    },
    {
        "slug": "rust-in-production",
        "title": "Rust in Production",
        "description": "Notes from the ingest rewrite",
        "body": "We moved our ingest pipeline to Rust.\n\n"
                "Latency dropped by **40 percent**.",
        "tagList": ["rust", "engineering"],
        "createdAt": "2024-02-11T14:00:00Z",
        "favoritesCount": 12,
    },
    {
        "slug": "tiny-habits",
        "title": "Tiny Habits",
        "description": "Sustainable writing routines",
        "body": "Start *small*. Ship `daily`.",
        "tagList": ["productivity"],
        "createdAt": "2024-03-02T08:15:00Z",
        "favoritesCount": 7,
    },
]


def article_record(domain: DomainModel, seed: dict) -> RecordVal:
    return make_record(domain, "Article", {
        "slug": StringVal(seed["slug"]),
        "title": StringVal(seed["title"]),
        "description": StringVal(seed["description"]),
        "body": StringVal(seed["body"]),
        "tagList": CollectionVal(tuple(StringVal(t) for t in seed["tagList"])),
        "createdAt": date_value(seed["createdAt"]),
        "favoritesCount": IntVal(seed["favoritesCount"]),
    })


def seed_store(store, domain: DomainModel) -> list[int]:
    """Insert the three demo articles; returns their ids."""
    ids: list[int] = []
    for seed in SEED_ARTICLES:
        ids.extend(store.store("Article", article_record(domain, seed)))
    return ids


def fixture_entries() -> list[dict]:
    """Mock fixture content: one entry per seed body plus a catch-all sample."""
    entries = [
        {"when": {"text": seed["body"]}, "then": {"html": render_markdown(seed["body"])}}
        for seed in SEED_ARTICLES
    ]
    entries.append({"when": {"text": "**hi**"},
                    "then": {"html": render_markdown("**hi**")}})
    return entries


def write_fixture(path: Path | None = None) -> Path:
    target = Path(path) if path else FIXTURE_FILE
    target.write_text(json.dumps(fixture_entries(), indent=2) + "\n", encoding="utf-8")
    return target
