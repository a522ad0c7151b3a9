"""Spider-format corpus ingestion: examples, schemas, databases."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError
from .schema import Schema, load_spider_tables
from .store import Database, load_database


@dataclass(frozen=True)
class Example:
    question: str
    query: str
    db_id: str


@dataclass
class Corpus:
    examples: list[Example]
    schemas: dict[str, Schema]
    databases: dict[str, Database]
    digest: str


def corpus_digest(examples_path) -> str:
    return hashlib.sha256(Path(examples_path).read_bytes()).hexdigest()


def database_path(data_dir, db_id: str) -> Path:
    """Locate one database file in a Spider-style data directory."""
    data_dir = Path(data_dir)
    nested = data_dir / "database" / db_id / f"{db_id}.sqlite"
    if nested.exists():
        return nested
    flat = data_dir / "database" / f"{db_id}.sqlite"
    if flat.exists():
        return flat
    raise DataError(f"no database file for {db_id!r} under {data_dir / 'database'}")


def load_corpus(data_dir, examples_file="examples.json", tables_file="tables.json") -> Corpus:
    """Load examples, schemas, and databases from one directory."""
    data_dir = Path(data_dir)
    examples_path = data_dir / examples_file
    tables_path = data_dir / tables_file
    if not examples_path.exists():
        raise DataError(f"missing examples file {examples_path}")
    if not tables_path.exists():
        raise DataError(f"missing schema file {tables_path}")
    with open(examples_path, encoding="utf-8") as fh:
        raw = json.load(fh)
    examples = []
    for i, obj in enumerate(raw):
        try:
            examples.append(Example(obj["question"], obj["query"], obj["db_id"]))
        except KeyError as exc:
            raise DataError(f"example {i} missing field {exc}")
    schemas = load_spider_tables(tables_path)
    databases = {}
    for db_id in sorted({ex.db_id for ex in examples}):
        if db_id not in schemas:
            raise DataError(f"no schema entry for db_id {db_id!r}")
        databases[db_id] = load_database(database_path(data_dir, db_id), schemas[db_id], db_id)
    return Corpus(
        examples=examples,
        schemas=schemas,
        databases=databases,
        digest=corpus_digest(examples_path),
    )
