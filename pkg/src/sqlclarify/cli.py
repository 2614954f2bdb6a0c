"""Command-line entry points: train, simulate, serve, session, restate, align."""

from __future__ import annotations

import argparse
import json
import sys

from . import corpus, encoder, sql_ir
from .aligner import locate_uncertain, mask_and_postprocess, matrix_dump, similarity_matrix
from .config import AppConfig, parse_embedding_spec, parse_endpoint
from .errors import ClarifyError
from .nl_modifier import pos_tag
from .orchestrator import Runtime, metrics, run_pipeline_once, simulate, start_session, submit_answer
from .parser_gateway import Gateway
from .question_gen import Answer
from .restater import load_templates, restate
from .schema_store import load_examples, load_schemas
from .text import STOP_WORDS, load_stop_words


def _load_artifacts(cfg: AppConfig):
    schemas = load_schemas(cfg.schemas) if cfg.schemas else corpus.bundled_schemas()
    examples = None
    if cfg.examples:
        examples = load_examples(cfg.examples, schemas)
    kind = parse_embedding_spec(cfg.embeddings)
    if kind[0] == "synthetic":
        _, dim, seed = kind
        if examples is None and cfg.schemas is None:
            examples = corpus.bundled_examples(schemas)
        vocab = corpus.corpus_vocabulary(schemas, examples or [])
        table = encoder.synthetic_table(sorted(vocab), dim=dim, seed=seed)
    else:
        table = encoder.load_embedding_file(kind[1])
    if cfg.model:
        layer, threshold = encoder.load_model(cfg.model)
    else:
        layer, threshold = encoder.ProjectionLayer.identity(table.dim), 0.7
    stop_words = load_stop_words(cfg.stop_words) if cfg.stop_words else STOP_WORDS
    templates = load_templates(cfg.templates) if cfg.templates else None
    runtime = Runtime(
        gateway=Gateway.from_list(schemas),
        table=table,
        layer=layer,
        threshold=threshold,
        endpoint=parse_endpoint(cfg.endpoint),
        stop_words=stop_words,
        templates=templates,
        option_count=cfg.option_count,
    )
    return runtime, schemas, examples


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file (env vars SQLCLARIFY_* override it)")
    parser.add_argument("--schemas", help="schema JSONL path (default: bundled corpus)")
    parser.add_argument("--examples", help="examples JSONL path (default: bundled corpus)")
    parser.add_argument("--embeddings", help="GloVe-format path or synthetic[:dim[:seed]]")
    parser.add_argument("--model", help="trained model JSON (projection + threshold)")
    parser.add_argument("--stop-words", dest="stop_words", help="stop-word override file")
    parser.add_argument("--templates", help="template override file (JSON)")
    parser.add_argument("--endpoint", help="toy[:strictness[:seed]] | oracle | subprocess:CMD | http:URL")
    parser.add_argument("--option-count", dest="option_count", type=int, help="options per question (default 5)")


def _config_from(args) -> AppConfig:
    keys = (
        "schemas", "examples", "embeddings", "model", "stop_words", "templates",
        "endpoint", "option_count", "cap", "session_ttl", "session_log", "static_dir",
    )
    overrides = {k: getattr(args, k, None) for k in keys}
    return AppConfig.load(path=getattr(args, "config", None), **overrides)


def cmd_train(args) -> int:
    cfg = _config_from(args)
    runtime, schemas, examples = _load_artifacts(cfg)
    if examples is None:
        examples = corpus.bundled_examples(schemas)
    train_cfg = encoder.TrainConfig(
        margin=args.margin,
        lam=args.lam,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        negatives_random=args.negatives_random,
        negatives_perturbed=args.negatives_perturbed,
        seed=args.seed,
    )
    triples = encoder.make_triples(examples, schemas, train_cfg, runtime.templates)
    print(f"training on {len(triples)} triples from {len(examples)} examples ...")
    result = encoder.train(triples, runtime.table, train_cfg)
    encoder.save_model(args.out, result.layer, result.threshold)
    print(f"epoch losses: {' '.join(f'{l:.4f}' for l in result.epoch_losses)}")
    print(f"threshold p = {result.threshold:.6f}")
    print(f"saved model to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config_from(args)
    runtime, schemas, examples = _load_artifacts(cfg)
    if examples is None:
        examples = corpus.bundled_examples(schemas)
    cap = None if args.no_cap else cfg.cap
    report = simulate(runtime, examples, cap=cap)
    m = metrics(report)
    print(f"examples:        {m.examples}")
    print(f"SQLAcc before:   {m.sql_acc_before * 100:.1f}%")
    print(f"SQLAcc after:    {m.sql_acc_after * 100:.1f}%")
    print(f"avg turns:       {m.avg_turns:.2f}")
    print(f"None answers:    {m.none_ratio * 100:.1f}%")
    print("turns histogram:")
    for turns in sorted(m.turn_histogram):
        count = m.turn_histogram[turns]
        print(f"  {turns:>3} | {'#' * count} {count}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2)
        print(f"report written to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    cfg = _config_from(args)
    runtime, _, _ = _load_artifacts(cfg)
    from .orchestrator import SessionStore
    from .service import create_app

    store = SessionStore(ttl_seconds=cfg.session_ttl, log_path=cfg.session_log)
    app = create_app(runtime, store=store, static_dir=cfg.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_session(args) -> int:
    cfg = _config_from(args)
    runtime, _, _ = _load_artifacts(cfg)
    session = start_session(runtime, args.question, args.db)
    print(f"predicted SQL: {sql_ir.to_sql_text(session.sql_before)}")
    while session.phase == "asking":
        q = session.current_question()
        print(f"\n{q.prompt}")
        for i, option in enumerate(q.options):
            print(f"  [{i}] {option.surface} ({option.kind})")
        while True:
            raw = input("choice> ").strip()
            if raw.isdigit() and int(raw) < len(q.options):
                break
            print(f"enter a number 0..{len(q.options) - 1}")
        submit_answer(runtime, session, Answer(q.token_index, int(raw)))
    print(f"\nmodified question: {session.modified_question}")
    print(f"final SQL: {sql_ir.to_sql_text(session.sql_after)}")
    return 0


def cmd_restate(args) -> int:
    cfg = _config_from(args)
    runtime, _, _ = _load_artifacts(cfg)
    schema = runtime.schema(args.db)
    query = sql_ir.parse_sql(args.sql, schema)
    restated = restate(sql_ir.to_ir(query, schema), schema, runtime.templates)
    print(restated.text)
    if args.tokens:
        for token in restated.tokens:
            print(f"  {token.surface}\t{token.origin}")
    return 0


def cmd_align(args) -> int:
    cfg = _config_from(args)
    runtime, _, _ = _load_artifacts(cfg)
    schema = runtime.schema(args.db)
    if args.sql:
        predicted = sql_ir.parse_sql(args.sql, schema)
        restated = restate(sql_ir.to_ir(predicted, schema), schema, runtime.templates)
        tagged = pos_tag(args.question)
        x_tokens = list(tagged.tokens)
        h, u = runtime.encode_pair(x_tokens, restated.surfaces())
        sim = similarity_matrix(h, u, x_tokens, restated.surfaces())
        masked = mask_and_postprocess(sim, restated, schema, runtime.stop_words)
        alignment = locate_uncertain(masked, runtime.threshold)
        print(matrix_dump(masked))
    else:
        result = run_pipeline_once(runtime, args.question, args.db)
        print(f"predicted SQL: {sql_ir.to_sql_text(result.predicted)}")
        print(f"restatement:   {result.restated.text}")
        alignment = result.alignment
    print(f"threshold p = {alignment.threshold:.4f}")
    print(f"uncertain tokens: {alignment.uncertain_tokens()}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sqlclarify", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the projection layer and threshold")
    _add_common(p_train)
    p_train.add_argument("--out", default="model.json")
    p_train.add_argument("--epochs", type=int, default=20)
    p_train.add_argument("--learning-rate", dest="learning_rate", type=float, default=0.01)
    p_train.add_argument("--margin", type=float, default=1.0)
    p_train.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p_train.add_argument("--negatives-random", dest="negatives_random", type=int, default=50)
    p_train.add_argument("--negatives-perturbed", dest="negatives_perturbed", type=int, default=50)
    p_train.add_argument("--seed", type=int, default=13)
    p_train.set_defaults(func=cmd_train)

    p_sim = sub.add_parser("simulate", help="run the oracle-user evaluation")
    _add_common(p_sim)
    p_sim.add_argument("--cap", type=int, help="max combinations executed per example (default 100)")
    p_sim.add_argument("--no-cap", action="store_true", help="execute every ranked combination")
    p_sim.add_argument("--out", help="write the full report as JSON")
    p_sim.set_defaults(func=cmd_simulate)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    _add_common(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--session-ttl", dest="session_ttl", type=float)
    p_serve.add_argument("--session-log", dest="session_log")
    p_serve.add_argument("--static-dir", dest="static_dir")
    p_serve.set_defaults(func=cmd_serve)

    p_session = sub.add_parser("session", help="run one interactive session in the terminal")
    _add_common(p_session)
    p_session.add_argument("--db", required=True)
    p_session.add_argument("--question", required=True)
    p_session.set_defaults(func=cmd_session)

    p_restate = sub.add_parser("restate", help="debug: render SQL as a question")
    _add_common(p_restate)
    p_restate.add_argument("--db", required=True)
    p_restate.add_argument("--sql", required=True)
    p_restate.add_argument("--tokens", action="store_true", help="also print token provenance")
    p_restate.set_defaults(func=cmd_restate)

    p_align = sub.add_parser("align", help="debug: dump the similarity matrix")
    _add_common(p_align)
    p_align.add_argument("--db", required=True)
    p_align.add_argument("--question", required=True)
    p_align.add_argument("--sql", help="predicted SQL (default: ask the endpoint)")
    p_align.set_defaults(func=cmd_align)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ClarifyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
