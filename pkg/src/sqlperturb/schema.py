"""Relational schema model and Spider-format schema file IO."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DataError, RenameCollisionError, UnknownColumnError

COLUMN_TYPES = ("text", "number", "boolean", "time", "others")


@dataclass(frozen=True)
class Column:
    name: str
    type: str
    primary_key: bool = False

    def __post_init__(self):
        if self.type not in COLUMN_TYPES:
            raise DataError(f"unknown column type {self.type!r} for column {self.name!r}")


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]

    def __post_init__(self):
        seen = set()
        for col in self.columns:
            key = col.name.lower()
            if key in seen:
                raise DataError(f"duplicate column {col.name!r} in table {self.name!r}")
            seen.add(key)

    def column(self, name: str) -> Column:
        for col in self.columns:
            if col.name.lower() == name.lower():
                return col
        raise UnknownColumnError(f"no column {name!r} in table {self.name!r}")

    def has_column(self, name: str) -> bool:
        return any(col.name.lower() == name.lower() for col in self.columns)


ColumnKey = tuple[str, str]  # (table name, column name)


@dataclass(frozen=True)
class Schema:
    tables: tuple[Table, ...]
    foreign_keys: tuple[tuple[ColumnKey, ColumnKey], ...] = field(default=())

    def __post_init__(self):
        seen = set()
        for table in self.tables:
            key = table.name.lower()
            if key in seen:
                raise DataError(f"duplicate table {table.name!r}")
            seen.add(key)
        for src, dst in self.foreign_keys:
            for tbl, col in (src, dst):
                if not self.has_column(tbl, col):
                    raise DataError(f"foreign key references unknown column {tbl}.{col}")

    def table(self, name: str) -> Table:
        for table in self.tables:
            if table.name.lower() == name.lower():
                return table
        raise UnknownColumnError(f"no table {name!r}")

    def has_table(self, name: str) -> bool:
        return any(t.name.lower() == name.lower() for t in self.tables)

    def column(self, table: str, column: str) -> Column:
        return self.table(table).column(column)

    def has_column(self, table: str, column: str) -> bool:
        return self.has_table(table) and self.table(table).has_column(column)

    def rename(self, mapping: dict[ColumnKey, str]) -> "Schema":
        """Return a schema with the mapped columns renamed.

        Mapping keys are (table, column) pairs, matched case-insensitively.
        Raises RenameCollisionError when a new name collides with a column
        that is not itself renamed away in the same mapping.
        """
        norm = {(t.lower(), c.lower()): new for (t, c), new in mapping.items()}
        for (tbl, col), new in norm.items():
            if not self.has_column(tbl, col):
                raise UnknownColumnError(f"cannot rename unknown column {tbl}.{col}")
            table = self.table(tbl)
            for other in table.columns:
                other_key = (tbl, other.name.lower())
                if other.name.lower() == new.lower() and other_key not in norm:
                    raise RenameCollisionError(
                        f"rename {tbl}.{col} -> {new} collides with existing column"
                    )
        new_names = list(norm.values())
        if len({n.lower() for n in new_names}) != len(new_names):
            # Same target name twice is only a collision within one table.
            by_table: dict[str, list[str]] = {}
            for (tbl, _), new in norm.items():
                by_table.setdefault(tbl, []).append(new.lower())
            for tbl, names in by_table.items():
                if len(set(names)) != len(names):
                    raise RenameCollisionError(f"two renames in table {tbl} share a target name")

        def new_col(tbl: Table, col: Column) -> Column:
            new = norm.get((tbl.name.lower(), col.name.lower()))
            if new is None:
                return col
            return Column(new, col.type, col.primary_key)

        tables = tuple(
            Table(t.name, tuple(new_col(t, c) for c in t.columns)) for t in self.tables
        )

        def remap(key: ColumnKey) -> ColumnKey:
            new = norm.get((key[0].lower(), key[1].lower()))
            return (key[0], new) if new is not None else key

        fks = tuple((remap(a), remap(b)) for a, b in self.foreign_keys)
        return Schema(tables, fks)


def schema_from_spider_entry(entry: dict) -> Schema:
    """Build a Schema from one entry of a Spider tables.json file."""
    table_names = entry["table_names_original"]
    column_names = entry["column_names_original"]
    column_types = entry["column_types"]
    if len(column_names) != len(column_types):
        raise DataError("column_names_original and column_types lengths differ")
    primary = set(entry.get("primary_keys", ()))
    cols_per_table: dict[int, list[Column]] = {i: [] for i in range(len(table_names))}
    index_to_key: dict[int, ColumnKey] = {}
    for idx, ((tbl_idx, col_name), col_type) in enumerate(zip(column_names, column_types)):
        if tbl_idx == -1:
            continue  # the '*' pseudo-column
        if col_type not in COLUMN_TYPES:
            col_type = "others"
        column = Column(col_name, col_type, primary_key=idx in primary)
        cols_per_table[tbl_idx].append(column)
        index_to_key[idx] = (table_names[tbl_idx], col_name)
    tables = tuple(
        Table(table_names[i], tuple(cols_per_table[i])) for i in range(len(table_names))
    )
    fks = []
    for src, dst in entry.get("foreign_keys", ()):
        if src in index_to_key and dst in index_to_key:
            fks.append((index_to_key[src], index_to_key[dst]))
    return Schema(tables, tuple(fks))


def schema_to_spider_entry(schema: Schema, db_id: str) -> dict:
    """Serialize a Schema back to the Spider tables.json entry layout."""
    table_names = [t.name for t in schema.tables]
    column_names: list[list] = [[-1, "*"]]
    column_types: list[str] = ["text"]
    primary_keys: list[int] = []
    key_to_index: dict[tuple[str, str], int] = {}
    for tbl_idx, table in enumerate(schema.tables):
        for col in table.columns:
            idx = len(column_names)
            column_names.append([tbl_idx, col.name])
            column_types.append(col.type)
            key_to_index[(table.name.lower(), col.name.lower())] = idx
            if col.primary_key:
                primary_keys.append(idx)
    foreign_keys = [
        [key_to_index[(a[0].lower(), a[1].lower())], key_to_index[(b[0].lower(), b[1].lower())]]
        for a, b in schema.foreign_keys
    ]
    return {
        "db_id": db_id,
        "table_names_original": table_names,
        "table_names": [n.lower().replace("_", " ") for n in table_names],
        "column_names_original": column_names,
        "column_names": [[i, n.lower().replace("_", " ")] for i, n in column_names],
        "column_types": column_types,
        "primary_keys": primary_keys,
        "foreign_keys": foreign_keys,
    }


def load_spider_tables(path) -> dict[str, Schema]:
    """Load a Spider tables.json file into {db_id: Schema}."""
    with open(path, encoding="utf-8") as fh:
        entries = json.load(fh)
    return {entry["db_id"]: schema_from_spider_entry(entry) for entry in entries}
