"""Bundled desk-scale corpus: schemas, question/SQL pairs, round-trip
queries, and a deterministic embedding table covering their vocabulary."""

from __future__ import annotations

import json
from importlib import resources

from . import sql_ir
from .encoder import EmbeddingTable, synthetic_table
from .restater import DEFAULT_TEMPLATES, restate
from .schema_store import DatabaseSchema, Example, load_examples, load_schemas
from .text import tokenize

EMBEDDING_DIM = 50
EMBEDDING_SEED = 7


def _data_path(name: str):
    return resources.files("sqlclarify.data").joinpath(name)


def bundled_schemas() -> list[DatabaseSchema]:
    with resources.as_file(_data_path("schemas.jsonl")) as path:
        return load_schemas(str(path))


def bundled_examples(schemas: list[DatabaseSchema] | None = None) -> list[Example]:
    schemas = schemas or bundled_schemas()
    with resources.as_file(_data_path("examples.jsonl")) as path:
        return load_examples(str(path), schemas)


def bundled_roundtrip_queries() -> list[dict]:
    with _data_path("roundtrip_queries.json").open(encoding="utf-8") as fh:
        return json.load(fh)


def corpus_vocabulary(schemas: list[DatabaseSchema], examples: list[Example]) -> set[str]:
    """Every word the pipeline can meet on this corpus: question tokens,
    restatement surfaces, schema name units, and template/agg words."""
    by_id = {s.db_id: s for s in schemas}
    vocab: set[str] = set()
    for ex in examples:
        vocab.update(tokenize(ex.question))
        schema = by_id[ex.db_id]
        tree = sql_ir.to_ir(sql_ir.parse_sql(ex.gold_sql, schema), schema)
        vocab.update(t.surface for t in restate(tree, schema).tokens)
    for schema in schemas:
        for unit in schema.name_units():
            vocab.update(unit.lower().split("_"))
    for fragment in DEFAULT_TEMPLATES.values():
        vocab.update(w for w in fragment.replace("{", " ").replace("}", " ").split() if w.isalpha())
    return vocab


def bundled_embeddings(
    schemas: list[DatabaseSchema] | None = None,
    examples: list[Example] | None = None,
    dim: int = EMBEDDING_DIM,
    seed: int = EMBEDDING_SEED,
) -> EmbeddingTable:
    schemas = schemas or bundled_schemas()
    examples = examples or bundled_examples(schemas)
    return synthetic_table(sorted(corpus_vocabulary(schemas, examples)), dim=dim, seed=seed)
