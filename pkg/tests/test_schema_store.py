import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sqlclarify.errors import DatasetValidationError, SchemaFormatError
from sqlclarify.schema_store import (
    ColumnDef,
    DatabaseSchema,
    TableDef,
    load_examples,
    load_schemas,
    occurrence_count,
)


def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


PETS_RECORD = {
    "db_id": "pets",
    "tables": [
        {"name": "student", "columns": [{"name": "stuid", "type": "number"}, {"name": "lname"}]},
        {"name": "has_pet", "columns": [{"name": "stuid", "type": "number"}, {"name": "petid", "type": "number"}]},
        {"name": "pet", "columns": [{"name": "petid", "type": "number"}, {"name": "pettype"}]},
    ],
}


class TestLoadSchemas:
    def test_pets_schema_loads(self, tmp_path):
        path = tmp_path / "schemas.jsonl"
        write_jsonl(path, [PETS_RECORD])
        schemas = load_schemas(str(path))
        assert len(schemas) == 1
        assert schemas[0].db_id == "pets"
        assert len(schemas[0].tables) == 3

    def test_empty_file_gives_empty_list(self, tmp_path):
        path = tmp_path / "schemas.jsonl"
        path.write_text("", encoding="utf-8")
        assert load_schemas(str(path)) == []

    def test_duplicate_db_id_rejected(self, tmp_path):
        path = tmp_path / "schemas.jsonl"
        write_jsonl(path, [PETS_RECORD, PETS_RECORD])
        with pytest.raises(DatasetValidationError, match="duplicate db_id"):
            load_schemas(str(path))

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "schemas.jsonl"
        path.write_text('{"db_id": "x"\nnot json\n', encoding="utf-8")
        with pytest.raises(SchemaFormatError, match=r":1"):
            load_schemas(str(path))

    def test_missing_field_reports_record(self, tmp_path):
        path = tmp_path / "schemas.jsonl"
        write_jsonl(path, [{"db_id": "x"}])
        with pytest.raises(SchemaFormatError, match=r":1"):
            load_schemas(str(path))


class TestSchemaInvariants:
    def test_duplicate_table_rejected(self):
        with pytest.raises(DatasetValidationError, match="duplicate table"):
            DatabaseSchema(
                db_id="x",
                tables=(
                    TableDef("t", (ColumnDef("a"),)),
                    TableDef("t", (ColumnDef("b"),)),
                ),
            )

    def test_duplicate_column_rejected(self):
        with pytest.raises(DatasetValidationError, match="duplicate column"):
            DatabaseSchema(db_id="x", tables=(TableDef("t", (ColumnDef("a"), ColumnDef("a"))),))

    def test_empty_table_rejected(self):
        with pytest.raises(DatasetValidationError, match="no columns"):
            DatabaseSchema(db_id="x", tables=(TableDef("t", ()),))

    def test_empty_db_id_rejected(self):
        with pytest.raises(DatasetValidationError):
            DatabaseSchema(db_id="", tables=(TableDef("t", (ColumnDef("a"),)),))


class TestOccurrenceCount:
    def test_age_counts_both_columns(self, pets_schema):
        assert occurrence_count(pets_schema, "age") == 2  # age, pet_age

    def test_absent_token_is_zero(self, pets_schema):
        assert occurrence_count(pets_schema, "zzzz") == 0

    def test_name_counts_three(self):
        schema = DatabaseSchema(
            db_id="x",
            tables=(TableDef("t", (ColumnDef("name"), ColumnDef("first_name"), ColumnDef("last_name"))),),
        )
        assert occurrence_count(schema, "name") == 3

    def test_underscore_splitting(self):
        schema = DatabaseSchema(db_id="x", tables=(TableDef("t", (ColumnDef("pet_age"),)),))
        assert occurrence_count(schema, "pet") == 1
        assert occurrence_count(schema, "age") == 1
        assert occurrence_count(schema, "pet_age") == 0  # only unit parts count

    def test_bounded_by_unit_count(self, pets_schema):
        total = len(pets_schema.name_units())
        for token in ("age", "pet", "stuid", "student", "id"):
            assert 0 <= occurrence_count(pets_schema, token) <= total

    @given(st.text(alphabet="abcdefg_ ", min_size=1, max_size=12))
    def test_deterministic(self, token):
        schema = DatabaseSchema(
            db_id="x",
            tables=(TableDef("t", (ColumnDef("a_b"), ColumnDef("b_c"), ColumnDef("c"))),),
        )
        assert occurrence_count(schema, token) == occurrence_count(schema, token)

    def test_order_independent(self):
        t1 = TableDef("t1", (ColumnDef("alpha"), ColumnDef("beta_alpha")))
        t2 = TableDef("t2", (ColumnDef("gamma"),))
        a = DatabaseSchema(db_id="x", tables=(t1, t2))
        b = DatabaseSchema(db_id="x", tables=(t2, t1))
        for token in ("alpha", "beta", "gamma", "zzz"):
            assert occurrence_count(a, token) == occurrence_count(b, token)


class TestLoadExamples:
    def _schemas(self, tmp_path):
        path = tmp_path / "schemas.jsonl"
        write_jsonl(path, [PETS_RECORD])
        return load_schemas(str(path))

    def test_well_formed_records(self, tmp_path):
        schemas = self._schemas(tmp_path)
        path = tmp_path / "examples.jsonl"
        write_jsonl(
            path,
            [
                {"question": "q1", "sql": "SELECT lname FROM student", "db_id": "pets"},
                {"question": "q2", "sql": "SELECT pettype FROM pet", "db_id": "pets"},
                {"question": "q3", "sql": "SELECT count(*) FROM student", "db_id": "pets"},
            ],
        )
        assert len(load_examples(str(path), schemas)) == 3

    def test_unknown_db_id_named_in_error(self, tmp_path):
        schemas = self._schemas(tmp_path)
        path = tmp_path / "examples.jsonl"
        write_jsonl(path, [{"question": "q", "sql": "SELECT 1", "db_id": "missing"}])
        with pytest.raises(DatasetValidationError, match="missing"):
            load_examples(str(path), schemas)

    def test_unresolvable_sql_rejected(self, tmp_path):
        schemas = self._schemas(tmp_path)
        path = tmp_path / "examples.jsonl"
        write_jsonl(path, [{"question": "q", "sql": "SELECT nosuch FROM student", "db_id": "pets"}])
        with pytest.raises(DatasetValidationError, match="invalid SQL"):
            load_examples(str(path), schemas)
