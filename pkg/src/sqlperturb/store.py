"""Database values: load, rename, content-equivalence transforms, execution, emission.

Content layout follows the Spider corpus: one SQLite file per database id,
schemas described by tables.json entries. Databases are immutable values;
every transform returns a new one. Execution materializes an in-memory
SQLite store per thread, so independent threads never share a handle.
"""

from __future__ import annotations

import sqlite3
import threading
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import (
    DataError,
    ExecutionError,
    SchemaMismatchError,
    TransformError,
)
from .schema import Column, Schema, Table
from .sqlast import SqlAst, has_top_order, print_sql

_SQLITE_TYPES = {
    "text": "TEXT",
    "number": "NUMERIC",
    "boolean": "INTEGER",
    "time": "TEXT",
    "others": "TEXT",
}

TRANSFORM_KINDS = (
    "split-text",
    "bool-to-text",
    "text-to-bool",
    "text-to-multibool",
    "number-remap",
)


@dataclass(frozen=True)
class Denotation:
    """Execution result: a row multiset, or a row sequence for ordered queries."""

    ordered: bool
    rows: tuple[tuple, ...]


def denotations_equal(gold: Denotation, pred: Denotation) -> bool:
    """Sequence equality when the gold query is ordered, multiset equality otherwise."""
    if gold.ordered:
        return gold.rows == pred.rows
    return Counter(gold.rows) == Counter(pred.rows)


def _check_cell(value, col: Column, table: str):
    if value is None:
        return value
    if col.type == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DataError(f"non-numeric cell {value!r} in {table}.{col.name}")
    elif col.type == "boolean":
        if isinstance(value, bool):
            return int(value)
        if value not in (0, 1):
            raise DataError(f"boolean cell must be 0/1, got {value!r} in {table}.{col.name}")
    elif col.type in ("text", "time"):
        if not isinstance(value, str):
            raise DataError(f"non-text cell {value!r} in {table}.{col.name}")
    return value


@dataclass(frozen=True)
class Database:
    schema: Schema
    content: dict[str, tuple[tuple, ...]]
    db_id: str
    _local: threading.local = field(
        default_factory=threading.local, compare=False, repr=False
    )

    def __post_init__(self):
        normalized: dict[str, tuple[tuple, ...]] = {}
        for table in self.schema.tables:
            rows = None
            for key, value in self.content.items():
                if key.lower() == table.name.lower():
                    rows = value
                    break
            if rows is None:
                raise SchemaMismatchError(f"no content for table {table.name!r}")
            checked = []
            for row in rows:
                if len(row) != len(table.columns):
                    raise SchemaMismatchError(
                        f"row arity {len(row)} != {len(table.columns)} in {table.name!r}"
                    )
                checked.append(
                    tuple(_check_cell(v, c, table.name) for v, c in zip(row, table.columns))
                )
            normalized[table.name] = tuple(checked)
        extra = {k for k in self.content} - {t.name for t in self.schema.tables}
        if any(not self.schema.has_table(k) for k in extra):
            bad = sorted(k for k in extra if not self.schema.has_table(k))
            raise SchemaMismatchError(f"content for unknown tables: {bad}")
        object.__setattr__(self, "content", normalized)

    def rows(self, table: str) -> tuple[tuple, ...]:
        return self.content[self.schema.table(table).name]

    def column_values(self, table: str, column: str) -> list:
        tbl = self.schema.table(table)
        idx = [c.name.lower() for c in tbl.columns].index(column.lower())
        return [row[idx] for row in self.content[tbl.name]]

    def _connection(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = sqlite3.connect(":memory:")
            conn.execute("PRAGMA case_sensitive_like = ON")
            _populate(conn, self)
            self._local.conn = conn
        return conn

    def execute(self, ast: SqlAst) -> Denotation:
        """Run a resolved query; ordered iff the query carries a top-level ORDER BY."""
        sql = print_sql(ast)
        try:
            cursor = self._connection().execute(sql)
            rows = tuple(tuple(row) for row in cursor.fetchall())
        except sqlite3.Error as exc:
            raise ExecutionError(f"{exc} while executing: {sql}") from exc
        return Denotation(ordered=has_top_order(ast), rows=rows)


def _create_table_sql(table: Table) -> str:
    cols = [f'"{c.name}" {_SQLITE_TYPES[c.type]}' for c in table.columns]
    pk = [c.name for c in table.columns if c.primary_key]
    if pk:
        quoted = ", ".join(f'"{name}"' for name in pk)
        cols.append(f"PRIMARY KEY ({quoted})")
    return f'CREATE TABLE "{table.name}" ({", ".join(cols)})'


def _populate(conn: sqlite3.Connection, db: Database) -> None:
    for table in db.schema.tables:
        conn.execute(_create_table_sql(table))
        rows = db.content[table.name]
        if rows:
            placeholders = ", ".join("?" for _ in table.columns)
            conn.executemany(f'INSERT INTO "{table.name}" VALUES ({placeholders})', rows)
    conn.commit()


def load_database(db_path, schema: Schema, db_id: str) -> Database:
    """Materialize a Database from a SQLite file, validated against `schema`."""
    path = Path(db_path)
    if not path.exists():
        raise SchemaMismatchError(f"database file not found: {path}")
    conn = sqlite3.connect(path)
    try:
        names = {
            row[0].lower()
            for row in conn.execute("SELECT name FROM sqlite_master WHERE type='table'")
        }
        content: dict[str, tuple[tuple, ...]] = {}
        for table in schema.tables:
            if table.name.lower() not in names:
                raise SchemaMismatchError(f"table {table.name!r} missing from {path.name}")
            info = conn.execute(f'PRAGMA table_info("{table.name}")').fetchall()
            file_cols = {row[1].lower() for row in info}
            want = {c.name.lower() for c in table.columns}
            if file_cols != want:
                raise SchemaMismatchError(
                    f"columns of {table.name!r} disagree: file has {sorted(file_cols)}, "
                    f"schema has {sorted(want)}"
                )
            select = ", ".join(f'"{c.name}"' for c in table.columns)
            raw = conn.execute(f'SELECT {select} FROM "{table.name}"').fetchall()
            content[table.name] = tuple(
                tuple(_coerce_cell(v, c) for v, c in zip(row, table.columns)) for row in raw
            )
    finally:
        conn.close()
    return Database(schema=schema, content=content, db_id=db_id)


def _coerce_cell(value, col: Column):
    if value is None:
        return None
    if col.type == "number" and isinstance(value, str):
        try:
            num = float(value)
        except ValueError:
            raise DataError(f"cannot coerce {value!r} to number in column {col.name!r}")
        return int(num) if num.is_integer() else num
    if col.type == "boolean":
        if isinstance(value, str) and value.strip() in ("0", "1"):
            return int(value.strip())
        return value
    return value


def emit_database(db: Database, path) -> None:
    """Write the database to a SQLite file; reloading yields an equal Database."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        path.unlink()
    conn = sqlite3.connect(path)
    try:
        _populate(conn, db)
    finally:
        conn.close()


def apply_rename(db: Database, mapping: dict[tuple[str, str], str]) -> Database:
    """Rename schema columns; content is untouched and the original unmodified."""
    if not mapping:
        return db
    return Database(schema=db.schema.rename(mapping), content=dict(db.content), db_id=db.db_id)


def with_id(db: Database, db_id: str) -> Database:
    return Database(schema=db.schema, content=dict(db.content), db_id=db_id)


# --------------------------------------------------------------------------
# Content-equivalence transforms


@dataclass(frozen=True)
class ContentTransform:
    """Replace one column with one or more semantically equivalent columns.

    Every kind is invertible at the row level: reconstruct() recovers the
    source cell from the target cells, which is what guarantees the
    pre/post databases hold the same information.
    """

    kind: str
    table: str
    source: str
    targets: tuple[str, ...]
    separator: str = " "
    true_value: str | None = None
    false_value: str | None = None
    true_label: str | None = None
    false_label: str | None = None
    values: tuple[str, ...] = ()
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise TransformError(f"unknown transform kind {self.kind!r}")
        if not self.targets:
            raise TransformError("transform needs at least one target column")
        single = ("bool-to-text", "text-to-bool", "number-remap")
        if self.kind in single and len(self.targets) != 1:
            raise TransformError(f"{self.kind} takes exactly one target column")
        if self.kind == "split-text" and len(self.targets) < 2:
            raise TransformError("split-text needs two or more target columns")
        if self.kind == "text-to-multibool" and len(self.values) != len(self.targets):
            raise TransformError("text-to-multibool needs one value per target column")
        if self.kind == "text-to-bool" and (self.true_value is None or self.false_value is None):
            raise TransformError("text-to-bool needs true_value and false_value")
        if self.kind == "bool-to-text" and (self.true_label is None or self.false_label is None):
            raise TransformError("bool-to-text needs true_label and false_label")
        if self.kind == "number-remap" and self.scale == 0:
            raise TransformError("number-remap scale must be nonzero")

    @property
    def order_reversing(self) -> bool:
        return self.kind == "number-remap" and self.scale < 0

    @property
    def target_type(self) -> str:
        return {
            "split-text": "text",
            "bool-to-text": "text",
            "text-to-bool": "boolean",
            "text-to-multibool": "boolean",
            "number-remap": "number",
        }[self.kind]

    def validate(self, db: Database) -> None:
        schema = db.schema
        if not schema.has_column(self.table, self.source):
            raise TransformError(f"unknown source column {self.table}.{self.source}")
        table = schema.table(self.table)
        for target in self.targets:
            if table.has_column(target) and target.lower() != self.source.lower():
                raise TransformError(f"target {target!r} already exists in {self.table!r}")
        if len({t.lower() for t in self.targets}) != len(self.targets):
            raise TransformError("duplicate target column names")
        source_col = table.column(self.source)
        if self.kind in ("split-text", "text-to-bool", "text-to-multibool"):
            if source_col.type != "text":
                raise TransformError(f"{self.kind} requires a text source column")
        if self.kind == "bool-to-text" and source_col.type != "boolean":
            raise TransformError("bool-to-text requires a boolean source column")
        if self.kind == "number-remap" and source_col.type != "number":
            raise TransformError("number-remap requires a number source column")
        for key_a, key_b in schema.foreign_keys:
            for tbl, col in (key_a, key_b):
                if tbl.lower() == self.table.lower() and col.lower() == self.source.lower():
                    raise TransformError(f"source column {col!r} participates in a foreign key")
        cells = set(v for v in db.column_values(self.table, self.source) if v is not None)
        if self.kind == "text-to-bool":
            if not cells <= {self.true_value, self.false_value}:
                raise TransformError(
                    f"column values {sorted(cells)} exceed the two mapped values"
                )
        if self.kind == "text-to-multibool":
            if not cells <= set(self.values):
                raise TransformError(f"column values {sorted(cells)} exceed the mapped values")
        for cell in cells:
            self.derive(cell)  # raises TransformError on any underivable cell

    def derive(self, cell) -> tuple:
        """Target cells for one source cell."""
        if cell is None:
            return (None,) * len(self.targets)
        if self.kind == "split-text":
            parts = str(cell).split(self.separator, len(self.targets) - 1)
            if len(parts) != len(self.targets) or any(not p for p in parts):
                raise TransformError(
                    f"cannot split {cell!r} into {len(self.targets)} parts"
                )
            return tuple(parts)
        if self.kind == "text-to-bool":
            if cell == self.true_value:
                return (1,)
            if cell == self.false_value:
                return (0,)
            raise TransformError(f"value {cell!r} is neither mapped value")
        if self.kind == "text-to-multibool":
            if cell not in self.values:
                raise TransformError(f"value {cell!r} not in mapped value set")
            return tuple(int(cell == v) for v in self.values)
        if self.kind == "bool-to-text":
            return (self.true_label if cell else self.false_label,)
        number = self.scale * cell + self.offset
        if isinstance(number, float) and number.is_integer():
            number = int(number)
        return (number,)

    def reconstruct(self, cells: tuple):
        """Source cell recovered from target cells (inverse of derive)."""
        if all(c is None for c in cells):
            return None
        if self.kind == "split-text":
            return self.separator.join(str(c) for c in cells)
        if self.kind == "text-to-bool":
            return self.true_value if cells[0] else self.false_value
        if self.kind == "text-to-multibool":
            hot = [i for i, c in enumerate(cells) if c]
            if len(hot) != 1:
                raise TransformError(f"expected exactly one set flag, got {cells!r}")
            return self.values[hot[0]]
        if self.kind == "bool-to-text":
            if cells[0] == self.true_label:
                return 1
            if cells[0] == self.false_label:
                return 0
            raise TransformError(f"unknown label {cells[0]!r}")
        number = (cells[0] - self.offset) / self.scale
        if isinstance(number, float) and number.is_integer():
            number = int(number)
        return number

    def map_number(self, value):
        """Literal rewrite for number-remap comparisons."""
        if self.kind != "number-remap":
            raise TransformError("map_number applies to number-remap only")
        number = self.scale * value + self.offset
        if isinstance(number, float) and number.is_integer():
            number = int(number)
        return number


def transform_from_json(obj: dict) -> ContentTransform:
    return ContentTransform(
        kind=obj["kind"],
        table=obj["table"],
        source=obj["source"],
        targets=tuple(obj["targets"]),
        separator=obj.get("separator", " "),
        true_value=obj.get("true_value"),
        false_value=obj.get("false_value"),
        true_label=obj.get("true_label"),
        false_label=obj.get("false_label"),
        values=tuple(obj.get("values", ())),
        scale=obj.get("scale", 1.0),
        offset=obj.get("offset", 0.0),
    )


def transform_to_json(t: ContentTransform) -> dict:
    obj = {"kind": t.kind, "table": t.table, "source": t.source, "targets": list(t.targets)}
    if t.kind == "split-text":
        obj["separator"] = t.separator
    if t.kind == "text-to-bool":
        obj["true_value"] = t.true_value
        obj["false_value"] = t.false_value
    if t.kind == "bool-to-text":
        obj["true_label"] = t.true_label
        obj["false_label"] = t.false_label
    if t.kind == "text-to-multibool":
        obj["values"] = list(t.values)
    if t.kind == "number-remap":
        obj["scale"] = t.scale
        obj["offset"] = t.offset
    return obj


def apply_content_transform(db: Database, transform: ContentTransform) -> Database:
    """Swap the source column for derived target columns; other columns byte-identical."""
    transform.validate(db)
    schema = db.schema
    table = schema.table(transform.table)
    src_idx = [c.name.lower() for c in table.columns].index(transform.source.lower())

    new_cols = list(table.columns)
    target_cols = [Column(name, transform.target_type) for name in transform.targets]
    new_cols[src_idx : src_idx + 1] = target_cols
    new_table = Table(table.name, tuple(new_cols))
    new_tables = tuple(new_table if t.name == table.name else t for t in schema.tables)
    new_schema = Schema(new_tables, schema.foreign_keys)

    new_rows = []
    for row in db.content[table.name]:
        derived = transform.derive(row[src_idx])
        new_rows.append(row[:src_idx] + derived + row[src_idx + 1 :])
    new_content = dict(db.content)
    new_content[table.name] = tuple(new_rows)
    return Database(schema=new_schema, content=new_content, db_id=db.db_id)


def reconstructed_source_values(db_post: Database, transform: ContentTransform) -> list:
    """Source-column values recovered from the post-transform target columns."""
    table = db_post.schema.table(transform.table)
    indexes = [
        [c.name.lower() for c in table.columns].index(t.lower()) for t in transform.targets
    ]
    out = []
    for row in db_post.content[table.name]:
        out.append(transform.reconstruct(tuple(row[i] for i in indexes)))
    return out
