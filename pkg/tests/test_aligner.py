import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sqlclarify import sql_ir
from sqlclarify.aligner import (
    SimilarityMatrix,
    hungarian_match,
    locate_uncertain,
    mask_and_postprocess,
    matrix_dump,
    similarity_matrix,
)
from sqlclarify.encoder import ProjectionLayer, encode, synthetic_table
from sqlclarify.restater import restate
from sqlclarify.text import tokenize


def brute_force_best(matrix: np.ndarray) -> float:
    n, m = matrix.shape
    best = float("-inf")
    if n <= m:
        for perm in itertools.permutations(range(m), n):
            best = max(best, sum(matrix[i, perm[i]] for i in range(n)))
    else:
        for perm in itertools.permutations(range(n), m):
            best = max(best, sum(matrix[perm[j], j] for j in range(m)))
    return best


def plain_sim(matrix) -> SimilarityMatrix:
    matrix = np.asarray(matrix, dtype=np.float64)
    n, m = matrix.shape
    return SimilarityMatrix(matrix, tuple(f"r{i}" for i in range(n)), tuple(f"c{j}" for j in range(m)))


class TestSimilarityMatrix:
    def test_identical_vectors(self):
        h = np.array([[1.0], [0.0]])
        assert similarity_matrix(h, h, ["a"], ["b"]).entries[0, 0] == pytest.approx(1.0)

    def test_orthogonal(self):
        h = np.array([[1.0], [0.0]])
        u = np.array([[0.0], [1.0]])
        assert similarity_matrix(h, u, ["a"], ["b"]).entries[0, 0] == pytest.approx(0.0)

    def test_45_degrees(self):
        h = np.array([[1.0], [0.0]])
        u = np.array([[1.0], [1.0]])
        assert similarity_matrix(h, u, ["a"], ["b"]).entries[0, 0] == pytest.approx(0.70710678, abs=1e-8)

    def test_zero_norm_gives_zero(self):
        h = np.zeros((2, 1))
        u = np.array([[1.0], [0.0]])
        assert similarity_matrix(h, u, ["a"], ["b"]).entries[0, 0] == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            similarity_matrix(np.zeros((2, 1)), np.zeros((3, 1)), ["a"], ["b"])


class TestHungarian:
    def test_spec_example(self):
        match = hungarian_match(plain_sim([[0.9, 0.1], [0.2, 0.8]]))
        assert match == {0: 0, 1: 1}

    def test_one_by_one(self):
        assert hungarian_match(plain_sim([[0.3]])) == {0: 0}

    def test_rectangular_cardinality(self):
        rng = np.random.RandomState(5)
        match = hungarian_match(plain_sim(rng.uniform(-1, 1, (3, 2))))
        assert len(match) == 2

    def test_matches_brute_force_small(self):
        rng = np.random.RandomState(123)
        for _ in range(60):
            n, m = rng.randint(1, 7), rng.randint(1, 7)
            matrix = rng.uniform(-1, 1, (n, m))
            match = hungarian_match(plain_sim(matrix))
            total = sum(matrix[i, j] for i, j in match.items())
            assert total == pytest.approx(brute_force_best(matrix), abs=1e-9)

    def test_lexicographic_tie_break(self):
        match = hungarian_match(plain_sim(np.ones((3, 3))))
        assert match == {0: 0, 1: 1, 2: 2}

    def test_empty_when_all_masked(self):
        sim = plain_sim([[1.0]])
        sim.exempt_rows = frozenset({0})
        assert hungarian_match(sim) == {}

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (4, 4), elements=st.floats(-1, 1, allow_nan=False)))
    def test_never_below_diagonal_weight(self, matrix):
        match = hungarian_match(plain_sim(matrix))
        total = sum(matrix[i, j] for i, j in match.items())
        assert total >= float(np.trace(matrix)) - 1e-9


class TestMaskAndPostprocess:
    def _restated(self, pets_schema, sql):
        tree = sql_ir.to_ir(sql_ir.parse_sql(sql, pets_schema), pets_schema)
        return restate(tree, pets_schema)

    def test_stop_word_rows_exempt(self, pets_schema):
        restated = self._restated(pets_schema, "SELECT lname FROM student")
        x = ["the", "lname"]
        sim = SimilarityMatrix(np.zeros((2, len(restated.tokens))), tuple(x), tuple(t.surface for t in restated.tokens))
        masked = mask_and_postprocess(sim, restated, pets_schema)
        assert 0 in masked.exempt_rows  # "the"
        assert 1 not in masked.exempt_rows

    def test_template_columns_excluded(self, pets_schema):
        restated = self._restated(pets_schema, "SELECT lname FROM student")
        x = ["lname"]
        sim = SimilarityMatrix(np.zeros((1, len(restated.tokens))), tuple(x), tuple(t.surface for t in restated.tokens))
        masked = mask_and_postprocess(sim, restated, pets_schema)
        surfaces = [t.surface for t in restated.tokens]
        assert surfaces.index("find") in masked.excluded_cols
        assert surfaces.index("lname") not in masked.excluded_cols

    def test_ambiguous_row_divided(self, pets_schema):
        restated = self._restated(pets_schema, "SELECT age FROM student")
        x = ["age"]
        cols = tuple(t.surface for t in restated.tokens)
        entries = np.full((1, len(cols)), 0.8)
        masked = mask_and_postprocess(SimilarityMatrix(entries, tuple(x), cols), restated, pets_schema)
        assert np.allclose(masked.entries[0], 0.4)  # C("age") = 2 in pets

    def test_lemma_used_for_count(self, pets_schema):
        restated = self._restated(pets_schema, "SELECT age FROM student")
        x = ["aged"]
        cols = tuple(t.surface for t in restated.tokens)
        entries = np.full((1, len(cols)), 0.8)
        masked = mask_and_postprocess(SimilarityMatrix(entries, tuple(x), cols), restated, pets_schema)
        assert np.allclose(masked.entries[0], 0.4)

    def test_unambiguous_row_unchanged(self, pets_schema):
        restated = self._restated(pets_schema, "SELECT lname FROM student")
        x = ["lname"]
        cols = tuple(t.surface for t in restated.tokens)
        entries = np.full((1, len(cols)), 0.8)
        masked = mask_and_postprocess(SimilarityMatrix(entries, tuple(x), cols), restated, pets_schema)
        assert np.allclose(masked.entries[0], 0.8)


class TestLocateUncertain:
    def _pipeline(self, pets_schema, question, predicted_sql, threshold=0.7):
        schema = pets_schema
        tree = sql_ir.to_ir(sql_ir.parse_sql(predicted_sql, schema), schema)
        restated = restate(tree, schema)
        x_tokens = tokenize(question)
        vocab = set(x_tokens) | {t.surface for t in restated.tokens}
        table = synthetic_table(sorted(vocab), dim=50, seed=7)
        layer = ProjectionLayer.identity(table.dim)
        h = encode(x_tokens, table, layer)
        u = encode(restated.surfaces(), table, layer)
        sim = similarity_matrix(h, u, x_tokens, restated.surfaces())
        masked = mask_and_postprocess(sim, restated, schema)
        return locate_uncertain(masked, threshold)

    def test_reference_case_cat_and_aged(self, pets_schema):
        # question mentions a value absent from the prediction and an
        # ambiguous age word; prediction grounded the wrong age column
        result = self._pipeline(
            pets_schema,
            "find the lname of the student that has a cat aged 3",
            "SELECT lname FROM student WHERE age = 3",
        )
        assert result.uncertain_tokens() == ["cat", "aged"]

    def test_perfect_alignment_no_uncertain(self, pets_schema):
        result = self._pipeline(
            pets_schema,
            "find the lname of student whose major is 'cs'",
            "SELECT lname FROM student WHERE major = 'cs'",
        )
        assert result.uncertain_tokens() == []

    def test_missing_token_is_uncertain(self, pets_schema):
        result = self._pipeline(
            pets_schema,
            "find the lname of student whose weight is 30",
            "SELECT lname FROM student",
        )
        assert "weight" in result.uncertain_tokens()

    def test_exempt_rows_never_uncertain(self, pets_schema):
        result = self._pipeline(
            pets_schema,
            "find the lname of the student",
            "SELECT fname FROM student",
        )
        uncertain = set(result.uncertain_tokens())
        assert not uncertain & {"find", "the", "of"}

    def test_deterministic(self, pets_schema):
        args = (
            pets_schema,
            "find the lname of the students aged 3",
            "SELECT lname FROM student",
        )
        a, b = self._pipeline(*args), self._pipeline(*args)
        assert a.uncertain == b.uncertain
        assert a.scores == b.scores
        assert a.matching == b.matching

    def test_unmatched_rows_score_zero(self, pets_schema):
        result = self._pipeline(
            pets_schema,
            "find the lname of student whose weight is 30",
            "SELECT lname FROM student",
        )
        idx = result.row_tokens.index("weight")
        assert result.scores[idx] == 0.0

    def test_dividing_by_count_never_raises_score(self, pets_schema):
        with_division = self._pipeline(
            pets_schema,
            "find the age of student",
            "SELECT age FROM student",
        )
        idx = with_division.row_tokens.index("age")
        assert with_division.scores[idx] <= 0.5 + 1e-9  # cosine <= 1 then halved


class TestMatrixDump:
    def test_grid_shape(self):
        sim = plain_sim([[0.25, 0.5]])
        dump = matrix_dump(sim)
        lines = dump.splitlines()
        assert lines[0] == "\tc0\tc1"
        assert lines[1].startswith("r0\t0.250\t0.500")
