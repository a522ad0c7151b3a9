"""Parallel pre/post test sets: records, registry, and on-disk format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import DataError
from .schema import Schema, schema_from_spider_entry, schema_to_spider_entry
from .store import Database, emit_database, load_database

DB_TYPES = ("schema-synonym", "schema-abbreviation", "dbcontent-equivalence")
NLQ_TYPES = (
    "keyword-synonym",
    "keyword-carrier",
    "column-synonym",
    "column-carrier",
    "column-attribute",
    "column-value",
    "value-synonym",
    "multitype",
    "others",
)
SQL_TYPES = ("comparison", "sort-order", "nondb-number", "db-text", "db-number")
ALL_TYPES = DB_TYPES + NLQ_TYPES + SQL_TYPES


def family_of(perturbation: str) -> str:
    if perturbation in DB_TYPES:
        return "db"
    if perturbation in NLQ_TYPES:
        return "nlq"
    if perturbation in SQL_TYPES:
        return "sql"
    raise DataError(f"unknown perturbation type {perturbation!r}")


@dataclass(frozen=True)
class PerturbedPair:
    id: str
    source_id: int  # index into the source corpus
    db_id_pre: str
    db_id_post: str
    nlq_pre: str
    nlq_post: str
    sql_pre: str
    sql_post: str
    provenance: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)


@dataclass
class TestSet:
    perturbation: str
    seed: int
    source_digest: str
    pairs: list[PerturbedPair]
    databases: dict[str, Database] = field(default_factory=dict)

    @property
    def family(self) -> str:
        return family_of(self.perturbation)

    def check_unique(self) -> None:
        ids = [p.id for p in self.pairs]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate pair ids in test set")
        keys = {(p.nlq_post, p.sql_post, p.db_id_post) for p in self.pairs}
        if len(keys) != len(self.pairs):
            raise DataError("duplicate (nlq_post, sql_post, db_id_post) pairs in test set")


def dedupe_pairs(pairs: list[PerturbedPair]) -> list[PerturbedPair]:
    seen = set()
    out = []
    for pair in pairs:
        key = (pair.nlq_post, pair.sql_post, pair.db_id_post)
        if key in seen:
            continue
        seen.add(key)
        out.append(pair)
    return out


def write_testset(ts: TestSet, out_dir) -> Path:
    """Write testset.json plus the post-perturbation database variants."""
    ts.check_unique()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "header": {
            "perturbation": ts.perturbation,
            "family": ts.family,
            "toolkit_version": __version__,
            "seed": ts.seed,
            "source_digest": ts.source_digest,
        },
        "pairs": [
            {
                "id": p.id,
                "source_id": p.source_id,
                "db_id_pre": p.db_id_pre,
                "db_id_post": p.db_id_post,
                "nlq_pre": p.nlq_pre,
                "nlq_post": p.nlq_post,
                "sql_pre": p.sql_pre,
                "sql_post": p.sql_post,
                "provenance": p.provenance,
                "flags": p.flags,
            }
            for p in ts.pairs
        ],
    }
    path = out_dir / "testset.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    if ts.databases:
        db_dir = out_dir / "databases"
        entries = []
        for db_id in sorted(ts.databases):
            db = ts.databases[db_id]
            emit_database(db, db_dir / f"{db_id}.sqlite")
            entries.append(schema_to_spider_entry(db.schema, db_id))
        with open(out_dir / "tables.json", "w", encoding="utf-8") as fh:
            json.dump(entries, fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")
    return path


def read_testset(path) -> TestSet:
    """Read testset.json (databases are resolved lazily via resolve_databases)."""
    path = Path(path)
    if path.is_dir():
        path = path / "testset.json"
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    header = payload["header"]
    pairs = [
        PerturbedPair(
            id=obj["id"],
            source_id=obj["source_id"],
            db_id_pre=obj["db_id_pre"],
            db_id_post=obj["db_id_post"],
            nlq_pre=obj["nlq_pre"],
            nlq_post=obj["nlq_post"],
            sql_pre=obj["sql_pre"],
            sql_post=obj["sql_post"],
            provenance=obj.get("provenance", {}),
            flags=obj.get("flags", {}),
        )
        for obj in payload["pairs"]
    ]
    return TestSet(
        perturbation=header["perturbation"],
        seed=header["seed"],
        source_digest=header["source_digest"],
        pairs=pairs,
    )


def load_variant_schemas(testset_dir) -> dict[str, Schema]:
    tables = Path(testset_dir) / "tables.json"
    if not tables.exists():
        return {}
    with open(tables, encoding="utf-8") as fh:
        entries = json.load(fh)
    return {e["db_id"]: schema_from_spider_entry(e) for e in entries}


def resolve_databases(ts: TestSet, testset_dir, corpus_databases: dict[str, Database]) -> None:
    """Fill ts.databases for every db_id_post, from variant files or the corpus."""
    schemas = load_variant_schemas(testset_dir)
    db_dir = Path(testset_dir) / "databases"
    for pair in ts.pairs:
        db_id = pair.db_id_post
        if db_id in ts.databases:
            continue
        variant = db_dir / f"{db_id}.sqlite"
        if variant.exists():
            if db_id not in schemas:
                raise DataError(f"variant database {db_id!r} has no schema entry")
            ts.databases[db_id] = load_database(variant, schemas[db_id], db_id)
        elif db_id in corpus_databases:
            ts.databases[db_id] = corpus_databases[db_id]
        else:
            raise DataError(f"cannot resolve post database {db_id!r}")
