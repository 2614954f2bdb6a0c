"""Regenerate the UI parity fixtures.

Drives sessions through the orchestrator directly (no HTTP) with a fixed
answer rule and freezes the outcomes. The parity test replays the same
answers through the web client's controller against a live service and
expects byte-identical results.

Run from the repository root:  python frontend/scripts/gen_fixtures.py
"""

import json
import pathlib

from sqlclarify import corpus, sql_ir
from sqlclarify.encoder import ProjectionLayer
from sqlclarify.orchestrator import Runtime, start_session, submit_answer
from sqlclarify.parser_gateway import Gateway, ParserEndpoint
from sqlclarify.question_gen import Answer

OUT = pathlib.Path(__file__).parent.parent / "tests" / "fixtures" / "sessions.json"


def main():
    schemas = corpus.bundled_schemas()
    examples = corpus.bundled_examples(schemas)
    table = corpus.bundled_embeddings(schemas, examples)
    runtime = Runtime(
        gateway=Gateway.from_list(schemas),
        table=table,
        layer=ProjectionLayer.identity(table.dim),
        threshold=0.7,
        endpoint=ParserEndpoint(kind="builtin_toy", strictness=1.0),
    )

    fixtures = []
    for index, example in enumerate(examples):
        if len(fixtures) >= 10:
            break
        session = start_session(runtime, example.question, example.db_id)
        if session.phase == "finalized" and len(fixtures) >= 3:
            continue  # keep a few zero-question sessions, then prefer interactive ones
        answers = []
        step = 0
        while session.phase == "asking":
            question = session.current_question()
            option_index = (index + step) % len(question.options)
            submit_answer(runtime, session, Answer(question.token_index, option_index))
            answers.append({"question_ref": question.token_index, "option_index": option_index})
            step += 1
        fixtures.append(
            {
                "db_id": example.db_id,
                "question": example.question,
                "answers": answers,
                "expected": {
                    "sql_before": sql_ir.to_sql_text(session.sql_before),
                    "modified_question": session.modified_question,
                    "sql_after": sql_ir.to_sql_text(session.sql_after),
                },
            }
        )

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(fixtures, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(fixtures)} fixtures to {OUT}")


if __name__ == "__main__":
    main()
