import pytest

from sqlclarify import corpus
from sqlclarify.encoder import ProjectionLayer
from sqlclarify.orchestrator import Runtime
from sqlclarify.parser_gateway import Gateway, ParserEndpoint
from sqlclarify.schema_store import ColumnDef, DatabaseSchema, TableDef


@pytest.fixture(scope="session")
def pets_schema() -> DatabaseSchema:
    return DatabaseSchema(
        db_id="pets",
        tables=(
            TableDef(
                "student",
                (
                    ColumnDef("stuid", "number"),
                    ColumnDef("lname"),
                    ColumnDef("fname"),
                    ColumnDef("age", "number"),
                    ColumnDef("major"),
                    ColumnDef("city_code"),
                ),
            ),
            TableDef("has_pet", (ColumnDef("stuid", "number"), ColumnDef("petid", "number"))),
            TableDef(
                "pet",
                (
                    ColumnDef("petid", "number"),
                    ColumnDef("pettype"),
                    ColumnDef("pet_age", "number"),
                    ColumnDef("weight", "number"),
                ),
            ),
        ),
    )


@pytest.fixture(scope="session")
def schemas():
    return corpus.bundled_schemas()


@pytest.fixture(scope="session")
def examples(schemas):
    return corpus.bundled_examples(schemas)


@pytest.fixture(scope="session")
def embed_table(schemas, examples):
    return corpus.bundled_embeddings(schemas, examples)


@pytest.fixture(scope="session")
def runtime(schemas, embed_table):
    """Identity projection with a mid-range threshold: raw synthetic cosines
    are near 1 for same-lemma tokens and near 0 otherwise, so 0.7 separates
    them the same way a trained threshold does."""
    return Runtime(
        gateway=Gateway.from_list(schemas),
        table=embed_table,
        layer=ProjectionLayer.identity(embed_table.dim),
        threshold=0.7,
        endpoint=ParserEndpoint(kind="builtin_toy", strictness=1.0),
    )
