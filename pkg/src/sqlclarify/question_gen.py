"""Multi-choice clarification questions for misunderstood tokens.

Candidates are every column and table name plus the aggregation operations.
They are ranked against the token by lexical overlap (shared lemmas over
unique lemmas) plus a semantic term derived from the Euclidean distance
between average embeddings, and the top three become options. Value ("this
is a database value") and None ("leave it alone") are always appended: None
keeps an over-eager error locator harmless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoder import EmbeddingTable
from .schema_store import AGGREGATIONS, DatabaseSchema
from .text import lemma_tokens, strip_quotes

KIND_COLUMN = "column"
KIND_TABLE = "table"
KIND_AGGREGATION = "aggregation"
KIND_VALUE = "value"
KIND_NONE = "none"


@dataclass(frozen=True)
class CandidateOption:
    surface: str
    kind: str
    score: float = 0.0
    source_ref: tuple[str, ...] | None = None  # (table, column) | (table,) | (agg,)

    def __post_init__(self):
        if self.kind in (KIND_VALUE, KIND_NONE) and self.source_ref is not None:
            raise ValueError(f"{self.kind} option cannot carry a schema reference")
        if not math.isfinite(self.score):
            raise ValueError("option score must be finite")


VALUE_OPTION = CandidateOption("Value", KIND_VALUE)
NONE_OPTION = CandidateOption("None", KIND_NONE)


@dataclass(frozen=True)
class MultiChoiceQuestion:
    token_index: int
    token_surface: str
    prompt: str
    options: tuple[CandidateOption, ...]

    def option(self, index: int) -> CandidateOption:
        if not 0 <= index < len(self.options):
            raise IndexError(f"option index {index} out of range 0..{len(self.options) - 1}")
        return self.options[index]


@dataclass(frozen=True)
class Answer:
    token_index: int
    option_index: int


def candidate_set(schema: DatabaseSchema) -> list[CandidateOption]:
    """All column names, all table names, and the aggregation operations.
    Column/table surfaces show underscores as spaces; the original name stays
    in source_ref."""
    options: list[CandidateOption] = []
    for table in schema.tables:
        for col in table.columns:
            options.append(
                CandidateOption(col.name.replace("_", " "), KIND_COLUMN, source_ref=(table.name, col.name))
            )
    for table in schema.tables:
        options.append(CandidateOption(table.name.replace("_", " "), KIND_TABLE, source_ref=(table.name,)))
    for agg in AGGREGATIONS:
        options.append(CandidateOption(agg, KIND_AGGREGATION, source_ref=(agg,)))
    return options


def option_score(option: CandidateOption, token: str, table: EmbeddingTable) -> float:
    """Lexical-plus-semantic correlation between a candidate span and the
    token: |shared lemmas| / |all lemmas| + 1 / (1 + euclidean distance of
    average embeddings)."""
    w_tokens = set(lemma_tokens(option.surface))
    z_tokens = set(lemma_tokens(strip_quotes(token)))
    union = w_tokens | z_tokens
    jaccard = len(w_tokens & z_tokens) / len(union) if union else 0.0
    distance = float(np.linalg.norm(table.span_vector(option.surface) - table.span_vector(token)))
    return jaccard + 1.0 / (1.0 + distance)


def generate_question(
    token_index: int,
    token_surface: str,
    schema: DatabaseSchema,
    table: EmbeddingTable,
    option_count: int = 5,
) -> MultiChoiceQuestion:
    """Rank the candidate set and build the question: top (option_count - 2)
    candidates, then Value, then None. Ties keep schema declaration order.
    Questions never have fewer than three options."""
    if option_count < 3:
        raise ValueError("option_count must be at least 3 (ranked + Value + None)")
    ranked = sorted(
        (
            (candidate, option_score(candidate, token_surface, table), position)
            for position, candidate in enumerate(candidate_set(schema))
        ),
        key=lambda item: (-item[1], item[2]),
    )
    chosen: list[CandidateOption] = []
    surfaces = {VALUE_OPTION.surface, NONE_OPTION.surface}
    for candidate, score, _ in ranked:
        if len(chosen) >= option_count - 2:
            break
        if candidate.surface in surfaces:
            continue
        surfaces.add(candidate.surface)
        chosen.append(CandidateOption(candidate.surface, candidate.kind, score, candidate.source_ref))
    options = tuple(chosen) + (VALUE_OPTION, NONE_OPTION)
    return MultiChoiceQuestion(
        token_index=token_index,
        token_surface=token_surface,
        prompt=f"What do you mean by '{strip_quotes(token_surface)}'?",
        options=options,
    )


def dedup(pending: list[MultiChoiceQuestion], answered: MultiChoiceQuestion, answer: Answer) -> list[MultiChoiceQuestion]:
    """Drop pending questions whose token appears as a word of the chosen
    option's surface; choosing Value or None never drops anything."""
    chosen = answered.option(answer.option_index)
    if chosen.kind in (KIND_VALUE, KIND_NONE):
        return list(pending)
    chosen_words = set(chosen.surface.lower().replace("_", " ").split())
    if chosen.source_ref:
        for part in chosen.source_ref:
            chosen_words.update(part.lower().replace("_", " ").split())
    return [
        q
        for q in pending
        if strip_quotes(q.token_surface).lower() not in chosen_words
    ]
