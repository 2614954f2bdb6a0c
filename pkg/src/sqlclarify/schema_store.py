"""Database schemas and question/SQL datasets.

Schemas and examples load from line-delimited JSON files (one record per
line) and are immutable afterwards, so concurrent readers need no locking.
No database contents are ever read; only table/column names and types.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DatasetValidationError, SchemaFormatError

AGGREGATIONS = ("min", "max", "sum", "avg", "count")

VALUE_TYPES = frozenset({"text", "number", "time", "boolean", "other"})


@dataclass(frozen=True)
class ColumnDef:
    name: str
    value_type: str = "text"


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...]

    def column(self, name: str) -> ColumnDef | None:
        for col in self.columns:
            if col.name == name:
                return col
        return None


@dataclass(frozen=True)
class DatabaseSchema:
    db_id: str
    tables: tuple[TableDef, ...]
    aggregations: tuple[str, ...] = AGGREGATIONS
    _units: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.db_id:
            raise DatasetValidationError("schema db_id must be nonempty")
        seen_tables: set[str] = set()
        for table in self.tables:
            if not table.name:
                raise DatasetValidationError(f"db {self.db_id!r}: table name must be nonempty")
            if table.name in seen_tables:
                raise DatasetValidationError(f"db {self.db_id!r}: duplicate table {table.name!r}")
            seen_tables.add(table.name)
            if not table.columns:
                raise DatasetValidationError(f"db {self.db_id!r}: table {table.name!r} has no columns")
            seen_cols: set[str] = set()
            for col in table.columns:
                if col.name in seen_cols:
                    raise DatasetValidationError(
                        f"db {self.db_id!r}: duplicate column {col.name!r} in {table.name!r}"
                    )
                seen_cols.add(col.name)
                if col.value_type not in VALUE_TYPES:
                    raise DatasetValidationError(
                        f"db {self.db_id!r}: column {table.name}.{col.name} has unknown type {col.value_type!r}"
                    )
        # Unit index for occurrence_count: every table and column name is one
        # unit, split on underscores/whitespace and lowercased.
        index: dict[str, int] = {}
        for name in self.name_units():
            for part in _split_units(name):
                index[part] = index.get(part, 0) + 1
        self._units.update(index)

    def name_units(self) -> list[str]:
        """All schema names, one entry per table name and per column name."""
        units = []
        for table in self.tables:
            units.append(table.name)
            units.extend(col.name for col in table.columns)
        return units

    def table(self, name: str) -> TableDef | None:
        for t in self.tables:
            if t.name == name:
                return t
        return None

    def tables_with_column(self, column: str) -> list[TableDef]:
        return [t for t in self.tables if t.column(column) is not None]

    def column_type(self, table: str, column: str) -> str:
        t = self.table(table)
        col = t.column(column) if t else None
        return col.value_type if col else "other"


def _split_units(name: str) -> list[str]:
    return [p for p in name.lower().replace("_", " ").split() if p]


def occurrence_count(schema: DatabaseSchema, token: str) -> int:
    """How many schema names (tables and columns) contain the token as a unit.

    Names are split on underscores and whitespace and lowercased, so "age"
    counts both an "age" column and a "pet_age" column.
    """
    return schema._units.get(token.lower(), 0)


@dataclass(frozen=True)
class Example:
    question: str
    gold_sql: str
    db_id: str


def load_schemas(path: str) -> list[DatabaseSchema]:
    """Load schemas from a JSONL file; rejects duplicate db_id."""
    schemas: list[DatabaseSchema] = []
    seen: set[str] = set()
    for lineno, record in _iter_records(path):
        try:
            db_id = record["db_id"]
            tables = tuple(
                TableDef(
                    name=t["name"],
                    columns=tuple(
                        ColumnDef(name=c["name"], value_type=c.get("type", "text")) for c in t["columns"]
                    ),
                )
                for t in record["tables"]
            )
        except (KeyError, TypeError) as exc:
            raise SchemaFormatError(f"bad schema record: {exc}", path=path, line=lineno) from exc
        if db_id in seen:
            raise DatasetValidationError(f"duplicate db_id {db_id!r} at {path}:{lineno}")
        seen.add(db_id)
        schemas.append(DatabaseSchema(db_id=db_id, tables=tables))
    return schemas


def load_examples(path: str, schemas: list[DatabaseSchema]) -> list[Example]:
    """Load question/SQL pairs; every record must reference a known db_id and
    its SQL must parse against that schema."""
    from . import sql_ir  # deferred: sql_ir imports nothing from here at module load

    by_id = {s.db_id: s for s in schemas}
    examples: list[Example] = []
    for lineno, record in _iter_records(path):
        try:
            example = Example(question=record["question"], gold_sql=record["sql"], db_id=record["db_id"])
        except (KeyError, TypeError) as exc:
            raise SchemaFormatError(f"bad example record: {exc}", path=path, line=lineno) from exc
        schema = by_id.get(example.db_id)
        if schema is None:
            raise DatasetValidationError(
                f"example at {path}:{lineno} references unknown db_id {example.db_id!r}"
            )
        try:
            sql_ir.parse_sql(example.gold_sql, schema)
        except Exception as exc:
            raise DatasetValidationError(
                f"example at {path}:{lineno} has invalid SQL {example.gold_sql!r}: {exc}"
            ) from exc
        examples.append(example)
    return examples


def _iter_records(path: str):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaFormatError(f"invalid JSON: {exc.msg}", path=path, line=lineno) from exc
