import sys
import textwrap

import pytest

from sqlclarify import sql_ir
from sqlclarify.errors import GatewayError
from sqlclarify.parser_gateway import (
    KIND_HTTP,
    KIND_ORACLE,
    KIND_SUBPROCESS,
    KIND_TOY,
    Gateway,
    ParserEndpoint,
    ToyParser,
)


@pytest.fixture()
def gateway(pets_schema):
    return Gateway.from_list([pets_schema])


def gold(sql, schema):
    return sql_ir.parse_sql(sql, schema)


class TestToyParser:
    def test_fully_marked_question(self, pets_schema, gateway):
        q = gateway.parse(
            "find the lname of student whose pet_age is 3", "pets", ParserEndpoint(kind=KIND_TOY)
        )
        expected = gold(
            "SELECT student.lname FROM student JOIN has_pet ON student.stuid = has_pet.stuid "
            "JOIN pet ON has_pet.petid = pet.petid WHERE pet.pet_age = 3",
            pets_schema,
        )
        assert sql_ir.canonical_equal(q, expected)

    def test_unmarked_paraphrase_dropped(self, pets_schema, gateway):
        q = gateway.parse("students aged 3", "pets", ParserEndpoint(kind=KIND_TOY, strictness=1.0))
        assert sql_ir.canonical_equal(q, gold("SELECT * FROM student", pets_schema))

    def test_quoted_value_predicate(self, pets_schema, gateway):
        q = gateway.parse(
            "find the lname of student whose major is 'cs'", "pets", ParserEndpoint(kind=KIND_TOY)
        )
        assert sql_ir.canonical_equal(
            q, gold("SELECT lname FROM student WHERE major = 'cs'", pets_schema)
        )

    def test_unquoted_text_value_dropped(self, pets_schema, gateway):
        q = gateway.parse(
            "find the lname of student whose major is cs", "pets", ParserEndpoint(kind=KIND_TOY)
        )
        assert sql_ir.canonical_equal(q, gold("SELECT lname FROM student", pets_schema))

    def test_count_phrase(self, pets_schema, gateway):
        q = gateway.parse("how many students are there", "pets", ParserEndpoint(kind=KIND_TOY))
        assert sql_ir.canonical_equal(q, gold("SELECT count(*) FROM student", pets_schema))

    def test_superlative_phrase(self, pets_schema, gateway):
        q = gateway.parse(
            "find the lname of student with the most age", "pets", ParserEndpoint(kind=KIND_TOY)
        )
        assert sql_ir.canonical_equal(
            q, gold("SELECT lname FROM student ORDER BY age DESC LIMIT 1", pets_schema)
        )

    def test_sort_with_limit(self, pets_schema, gateway):
        q = gateway.parse(
            "find the lname of student sorted by age in descending order limited to first 3",
            "pets",
            ParserEndpoint(kind=KIND_TOY),
        )
        assert sql_ir.canonical_equal(
            q, gold("SELECT lname FROM student ORDER BY age DESC LIMIT 3", pets_schema)
        )

    def test_comparison_phrases(self, pets_schema, gateway):
        q = gateway.parse(
            "find the lname of student whose age is greater than 20",
            "pets",
            ParserEndpoint(kind=KIND_TOY),
        )
        assert sql_ir.canonical_equal(
            q, gold("SELECT lname FROM student WHERE age > 20", pets_schema)
        )

    def test_strictness_zero_drops_unmarked(self, pets_schema):
        toy = ToyParser(pets_schema, strictness=0.0, seed=1)
        sql = toy.parse("lname student")
        # both mentions unmarked: everything dropped, fallback guess remains
        assert "WHERE" not in sql

    def test_strictness_deterministic(self, pets_schema):
        toy_a = ToyParser(pets_schema, strictness=0.5, seed=9)
        toy_b = ToyParser(pets_schema, strictness=0.5, seed=9)
        questions = [
            "find the lname of student",
            "find the age of student whose major is 'cs'",
            "how many pets are there",
        ]
        assert [toy_a.parse(q) for q in questions] == [toy_b.parse(q) for q in questions]

    def test_strictness_between_extremes(self, pets_schema):
        # with many unmarked mentions, 0 < strictness < 1 drops some but not all
        question = "lname fname age major weight pettype"
        full = ToyParser(pets_schema, strictness=1.0).parse(question)
        half = ToyParser(pets_schema, strictness=0.5, seed=3).parse(question)
        none = ToyParser(pets_schema, strictness=0.0).parse(question)
        assert len(none) < len(half) < len(full)

    def test_improvement_monotonicity(self, pets_schema, gateway):
        endpoint = ParserEndpoint(kind=KIND_TOY)
        before = gateway.parse("find the lname of student aged 3", "pets", endpoint)
        after = gateway.parse("find the lname of student whose age is 3", "pets", endpoint)
        before_preds = set(sql_ir.canon(before)[5])
        after_preds = set(sql_ir.canon(after)[5])
        assert before_preds <= after_preds

    def test_oracle_ignores_strictness(self, pets_schema, gateway):
        loose = gateway.parse(
            "find the lname of student", "pets", ParserEndpoint(kind=KIND_ORACLE, strictness=0.0)
        )
        assert sql_ir.canonical_equal(loose, gold("SELECT lname FROM student", pets_schema))


ECHO_ADAPTER = textwrap.dedent(
    """
    import json, sys
    for line in sys.stdin:
        request = json.loads(line)
        print(json.dumps({"sql": "SELECT lname FROM student"}))
        sys.stdout.flush()
    """
)


class TestSubprocessAdapter:
    def test_echo_adapter_round_trip(self, pets_schema, tmp_path):
        script = tmp_path / "echo_adapter.py"
        script.write_text(ECHO_ADAPTER, encoding="utf-8")
        gateway = Gateway.from_list([pets_schema])
        endpoint = ParserEndpoint(kind=KIND_SUBPROCESS, location=f"{sys.executable} {script}")
        q = gateway.parse("anything at all", "pets", endpoint)
        assert sql_ir.canonical_equal(q, gold("SELECT lname FROM student", pets_schema))

    def test_error_response_raises(self, pets_schema, tmp_path):
        script = tmp_path / "err_adapter.py"
        script.write_text(
            'import json, sys\n'
            'for line in sys.stdin:\n'
            '    print(json.dumps({"error": "boom"}))\n'
            '    sys.stdout.flush()\n',
            encoding="utf-8",
        )
        gateway = Gateway.from_list([pets_schema])
        endpoint = ParserEndpoint(kind=KIND_SUBPROCESS, location=f"{sys.executable} {script}")
        with pytest.raises(GatewayError, match="boom"):
            gateway.parse("anything", "pets", endpoint)

    def test_invalid_sql_raises(self, pets_schema, tmp_path):
        script = tmp_path / "bad_adapter.py"
        script.write_text(
            'import json, sys\n'
            'for line in sys.stdin:\n'
            '    print(json.dumps({"sql": "NOT SQL AT ALL"}))\n'
            '    sys.stdout.flush()\n',
            encoding="utf-8",
        )
        gateway = Gateway.from_list([pets_schema])
        endpoint = ParserEndpoint(kind=KIND_SUBPROCESS, location=f"{sys.executable} {script}")
        with pytest.raises(GatewayError, match="invalid SQL"):
            gateway.parse("anything", "pets", endpoint)

    def test_timeout(self, pets_schema, tmp_path):
        script = tmp_path / "slow_adapter.py"
        script.write_text("import time\ntime.sleep(60)\n", encoding="utf-8")
        gateway = Gateway.from_list([pets_schema])
        endpoint = ParserEndpoint(
            kind=KIND_SUBPROCESS, location=f"{sys.executable} {script}", timeout=0.5
        )
        with pytest.raises(GatewayError, match="timed out"):
            gateway.parse("anything", "pets", endpoint)


class TestEndpointValidation:
    def test_missing_location_rejected(self):
        with pytest.raises(GatewayError):
            ParserEndpoint(kind=KIND_SUBPROCESS)
        with pytest.raises(GatewayError):
            ParserEndpoint(kind=KIND_HTTP)

    def test_bad_strictness_rejected(self):
        with pytest.raises(GatewayError):
            ParserEndpoint(kind=KIND_TOY, strictness=1.5)

    def test_unknown_db(self, gateway):
        with pytest.raises(GatewayError, match="unknown db_id"):
            gateway.parse("q", "nope", ParserEndpoint(kind=KIND_TOY))
