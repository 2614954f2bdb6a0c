"""The interactive repair loop and its automatic evaluation.

One pass: parse the question, restate the predicted SQL, align the two,
generate a multi-choice question per misunderstood token. Interactive
sessions collect answers one at a time (dropping questions a previous answer
already resolves), rewrite the question, and re-parse. The simulator plays
an oracle user: it enumerates option combinations, keeps those compatible
with the gold SQL, scores them, and replays the best ones through the same
modifier and parser until one reproduces the gold query.
"""

from __future__ import annotations

import itertools
import json
import threading
import time
import uuid
from dataclasses import dataclass, field

from . import sql_ir
from .aligner import AlignmentResult, locate_uncertain, mask_and_postprocess, similarity_matrix
from .encoder import BuiltinEncoder, EmbeddingTable, HttpEncoder, ProjectionLayer
from .errors import ClarifyError, GatewayError, SessionError
from .nl_modifier import PosTaggedUtterance, apply_answers, pos_tag
from .parser_gateway import Gateway, ParserEndpoint
from .question_gen import (
    KIND_NONE,
    KIND_VALUE,
    Answer,
    MultiChoiceQuestion,
    dedup,
    generate_question,
)
from .restater import RestatedUtterance, restate
from .schema_store import DatabaseSchema, Example
from .text import STOP_WORDS, strip_quotes, tokenize


@dataclass
class Runtime:
    """Loaded artifacts every pipeline pass needs."""

    gateway: Gateway
    table: EmbeddingTable
    layer: ProjectionLayer
    threshold: float
    endpoint: ParserEndpoint = field(default_factory=ParserEndpoint)
    stop_words: frozenset[str] = STOP_WORDS
    templates: dict | None = None
    option_count: int = 5
    encoder_url: str | None = None  # external encoder service, if any

    def schema(self, db_id: str) -> DatabaseSchema:
        return self.gateway.schema(db_id)

    def encode_pair(self, x_tokens, xp_tokens):
        if self.encoder_url:
            return HttpEncoder(self.encoder_url).encode_pair(x_tokens, xp_tokens)
        return BuiltinEncoder(self.table, self.layer).encode_pair(x_tokens, xp_tokens)


@dataclass
class PipelineResult:
    question: str
    db_id: str
    predicted: sql_ir.SqlQuery
    restated: RestatedUtterance
    tagged: PosTaggedUtterance
    alignment: AlignmentResult
    questions: list[MultiChoiceQuestion]


def run_pipeline_once(runtime: Runtime, question: str, db_id: str) -> PipelineResult:
    """Parse, restate, align, and generate one question per uncertain token."""
    schema = runtime.schema(db_id)
    predicted = runtime.gateway.parse(question, db_id, runtime.endpoint)
    tree = sql_ir.to_ir(predicted, schema)
    restated = restate(tree, schema, runtime.templates)
    tagged = pos_tag(question)
    x_tokens = list(tagged.tokens)
    h, u = runtime.encode_pair(x_tokens, restated.surfaces())
    sim = similarity_matrix(h, u, x_tokens, restated.surfaces())
    masked = mask_and_postprocess(sim, restated, schema, runtime.stop_words)
    alignment = locate_uncertain(masked, runtime.threshold)
    questions = [
        generate_question(i, x_tokens[i], schema, runtime.table, runtime.option_count)
        for i in alignment.uncertain
    ]
    return PipelineResult(
        question=question,
        db_id=db_id,
        predicted=predicted,
        restated=restated,
        tagged=tagged,
        alignment=alignment,
        questions=questions,
    )


# ---------------------------------------------------------------------------
# Interactive sessions

PHASE_ASKING = "asking"
PHASE_FINALIZED = "finalized"


@dataclass
class Session:
    id: str
    db_id: str
    question: str
    pipeline: PipelineResult
    pending: list[MultiChoiceQuestion]
    total_questions: int
    answers: list[tuple[MultiChoiceQuestion, Answer]] = field(default_factory=list)
    phase: str = PHASE_ASKING
    modified_question: str | None = None
    sql_after: sql_ir.SqlQuery | None = None
    created_at: float = field(default_factory=time.time)

    @property
    def sql_before(self) -> sql_ir.SqlQuery:
        return self.pipeline.predicted

    def current_question(self) -> MultiChoiceQuestion | None:
        return self.pending[0] if self.pending else None


def start_session(runtime: Runtime, question: str, db_id: str) -> Session:
    """Run the pipeline and open a session; zero uncertain tokens finalize it
    immediately with the first prediction."""
    result = run_pipeline_once(runtime, question, db_id)
    session = Session(
        id=uuid.uuid4().hex,
        db_id=db_id,
        question=question,
        pipeline=result,
        pending=list(result.questions),
        total_questions=len(result.questions),
    )
    if not session.pending:
        session.phase = PHASE_FINALIZED
        session.modified_question = question
        session.sql_after = result.predicted
    return session


def submit_answer(runtime: Runtime, session: Session, answer: Answer) -> Session:
    """Record an answer to the current question, drop now-redundant pending
    questions, and finalize (rewrite + re-parse) when none remain."""
    if session.phase != PHASE_ASKING:
        raise SessionError(f"session {session.id} is {session.phase}; no question to answer")
    current = session.current_question()
    if answer.token_index != current.token_index:
        raise SessionError(
            f"answer targets token {answer.token_index}, current question is about {current.token_index}"
        )
    chosen = current.option(answer.option_index)  # IndexError -> caller bug
    session.answers.append((current, answer))
    session.pending = dedup(session.pending[1:], current, answer)
    if not session.pending:
        modified = apply_answers(
            session.pipeline.tagged,
            [(q.token_index, q.option(a.option_index)) for q, a in session.answers],
        )
        session.modified_question = modified.text
        session.sql_after = runtime.gateway.parse(modified.text, session.db_id, runtime.endpoint)
        session.phase = PHASE_FINALIZED
    return session


class SessionStore:
    """In-memory session map with TTL expiry, per-session locking, and an
    optional append-only JSONL event log for post-mortems."""

    def __init__(self, ttl_seconds: float = 3600.0, log_path: str | None = None):
        self.ttl = ttl_seconds
        self.log_path = log_path
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._global = threading.Lock()

    def put(self, session: Session):
        with self._global:
            self._purge()
            self._sessions[session.id] = session
            self._locks[session.id] = threading.Lock()
        self._log("created", session.id, {"question": session.question, "db_id": session.db_id})

    def get(self, session_id: str) -> Session:
        with self._global:
            self._purge()
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionError(f"unknown or expired session {session_id!r}")
        return session

    def lock(self, session_id: str) -> threading.Lock:
        with self._global:
            lock = self._locks.get(session_id)
        if lock is None:
            raise SessionError(f"unknown or expired session {session_id!r}")
        return lock

    def _purge(self):
        deadline = time.time() - self.ttl
        for sid in [sid for sid, s in self._sessions.items() if s.created_at < deadline]:
            del self._sessions[sid]
            del self._locks[sid]

    def _log(self, event: str, session_id: str, payload: dict):
        if not self.log_path:
            return
        record = {"ts": time.time(), "event": event, "session": session_id, **payload}
        with self._global:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")

    def log_answer(self, session: Session, answer: Answer):
        self._log("answer", session.id, {"token": answer.token_index, "option": answer.option_index})


# ---------------------------------------------------------------------------
# Simulator


def gold_token_set(gold_sql_text: str) -> set[str]:
    """Lowercased tokens of the gold SQL; identifiers contribute their
    underscore parts as well, so "age" matches "pet_age"."""
    tokens = set()
    for token in tokenize(gold_sql_text):
        word = strip_quotes(token)
        tokens.add(word)
        tokens.update(p for p in word.split("_") if p)
    return tokens


def gold_literals(gold: sql_ir.SqlQuery) -> list[sql_ir.Value]:
    values: list[sql_ir.Value] = []

    def from_conds(conds):
        for cond in conds:
            if isinstance(cond, sql_ir.BoolGroup):
                from_conds(cond.items)
            elif isinstance(cond.right, sql_ir.Value):
                values.append(cond.right)
            elif isinstance(cond.right, tuple):
                values.extend(cond.right)
            elif isinstance(cond.right, sql_ir.SqlQuery):
                values.extend(gold_literals(cond.right))

    from_conds(gold.where)
    from_conds(gold.having)
    if gold.set_op is not None:
        values.extend(gold_literals(gold.set_op[1]))
    return values


def filter_options(
    question: MultiChoiceQuestion,
    gold_tokens: set[str],
    literals: list[sql_ir.Value],
) -> list[int]:
    """Indices of options compatible with the gold SQL. None always survives;
    Value survives when some gold literal could explain the token; schema and
    aggregation options survive when all their words occur in the gold SQL."""
    token_word = strip_quotes(question.token_surface).lower()
    viable: list[int] = []
    for i, option in enumerate(question.options):
        if option.kind == KIND_NONE:
            viable.append(i)
        elif option.kind == KIND_VALUE:
            for lit in literals:
                lit_tokens = {p.lower() for p in lit.text.replace("_", " ").split()}
                if token_word in lit_tokens or lit.text.lower() == token_word:
                    viable.append(i)
                    break
        else:
            words = set(option.surface.lower().replace("_", " ").split())
            if option.source_ref:
                for part in option.source_ref:
                    words.update(part.lower().split("_"))
            if words <= gold_tokens:
                viable.append(i)
    return viable


def rank_combinations(
    questions: list[MultiChoiceQuestion],
    viable: list[list[int]],
    cap: int | None,
) -> tuple[int, list[tuple[int, ...]]]:
    """All combinations of viable options ranked by summed option score
    (descending), ties by option indices; returns (ranked count, the top
    min(cap, all) combinations in execution order)."""
    combos = list(itertools.product(*viable))
    scored = []
    for combo in combos:
        total = sum(questions[k].options[i].score for k, i in enumerate(combo))
        scored.append((-total, combo))
    scored.sort()
    ordered = [combo for _, combo in scored]
    if cap is not None:
        ordered = ordered[:cap]
    return len(combos), ordered


@dataclass
class ExampleRecord:
    db_id: str
    question: str
    before_correct: bool
    after_correct: bool
    turns: int
    combos_ranked: int = 0
    combos_executed: int = 0
    winning_answers: list[dict] | None = None
    none_answers: int = 0
    answers_total: int = 0
    error: str | None = None


@dataclass
class SimulationReport:
    records: list[ExampleRecord]
    cap: int | None
    option_count: int

    def to_json(self) -> dict:
        return {
            "cap": self.cap,
            "option_count": self.option_count,
            "records": [vars(r).copy() for r in self.records],
            "metrics": vars(metrics(self)),
        }


@dataclass
class Metrics:
    examples: int
    sql_acc_before: float
    sql_acc_after: float
    avg_turns: float
    turn_histogram: dict[int, int]
    none_ratio: float


def metrics(report: SimulationReport) -> Metrics:
    """Aggregate exact-match accuracy before/after, mean number of questions
    over examples that asked any, the turn histogram, and the share of None
    answers on repaired examples."""
    records = report.records
    if not records:
        raise ClarifyError("empty simulation report")
    before = sum(r.before_correct for r in records)
    after = sum(r.after_correct for r in records)
    asked = [r for r in records if r.turns > 0]
    histogram: dict[int, int] = {}
    for r in records:
        histogram[r.turns] = histogram.get(r.turns, 0) + 1
    none_total = sum(r.none_answers for r in records if r.winning_answers is not None)
    answers_total = sum(r.answers_total for r in records if r.winning_answers is not None)
    return Metrics(
        examples=len(records),
        sql_acc_before=before / len(records),
        sql_acc_after=after / len(records),
        avg_turns=(sum(r.turns for r in asked) / len(asked)) if asked else 0.0,
        turn_histogram=histogram,
        none_ratio=(none_total / answers_total) if answers_total else 0.0,
    )


def _replay_combo(
    runtime: Runtime,
    pipeline: PipelineResult,
    combo: tuple[int, ...],
    parse_cache: dict[str, sql_ir.SqlQuery | None],
) -> tuple[sql_ir.SqlQuery | None, list[tuple[MultiChoiceQuestion, int]], str]:
    """Answer the session's questions with the combo's choices (dedup included)
    and re-parse the rewritten question."""
    choice = {q.token_index: combo[k] for k, q in enumerate(pipeline.questions)}
    remaining = list(pipeline.questions)
    answered: list[tuple[MultiChoiceQuestion, int]] = []
    while remaining:
        q = remaining[0]
        idx = choice[q.token_index]
        answered.append((q, idx))
        remaining = dedup(remaining[1:], q, Answer(q.token_index, idx))
    modified = apply_answers(
        pipeline.tagged, [(q.token_index, q.option(i)) for q, i in answered]
    )
    if modified.text not in parse_cache:
        try:
            parse_cache[modified.text] = runtime.gateway.parse(
                modified.text, pipeline.db_id, runtime.endpoint
            )
        except GatewayError:
            parse_cache[modified.text] = None
    return parse_cache[modified.text], answered, modified.text


def simulate(
    runtime: Runtime,
    examples: list[Example],
    cap: int | None = 100,
) -> SimulationReport:
    """Oracle-user evaluation over a dataset.

    Per example: run the pipeline, filter options against the gold SQL,
    enumerate and rank the viable combinations, then replay the best ones
    (at most `cap`) until one re-parses to the gold query. The kept result
    is never worse than the first prediction.
    """
    records: list[ExampleRecord] = []
    for ex in examples:
        schema = runtime.schema(ex.db_id)
        gold = sql_ir.parse_sql(ex.gold_sql, schema)
        try:
            pipeline = run_pipeline_once(runtime, ex.question, ex.db_id)
        except ClarifyError as exc:
            records.append(
                ExampleRecord(
                    db_id=ex.db_id,
                    question=ex.question,
                    before_correct=False,
                    after_correct=False,
                    turns=0,
                    error=str(exc),
                )
            )
            continue
        before = sql_ir.canonical_equal(pipeline.predicted, gold)
        record = ExampleRecord(
            db_id=ex.db_id,
            question=ex.question,
            before_correct=before,
            after_correct=before,
            turns=len(pipeline.questions),
        )
        if pipeline.questions:
            gold_tokens = gold_token_set(ex.gold_sql)
            literals = gold_literals(gold)
            viable = [filter_options(q, gold_tokens, literals) for q in pipeline.questions]
            ranked, ordered = rank_combinations(pipeline.questions, viable, cap)
            record.combos_ranked = ranked
            parse_cache: dict[str, sql_ir.SqlQuery | None] = {}
            for combo in ordered:
                record.combos_executed += 1
                predicted, answered, _ = _replay_combo(runtime, pipeline, combo, parse_cache)
                if predicted is not None and sql_ir.canonical_equal(predicted, gold):
                    record.after_correct = True
                    record.turns = len(answered)
                    record.winning_answers = [
                        {
                            "token_index": q.token_index,
                            "token": q.token_surface,
                            "option_index": i,
                            "kind": q.options[i].kind,
                            "surface": q.options[i].surface,
                        }
                        for q, i in answered
                    ]
                    record.none_answers = sum(1 for q, i in answered if q.options[i].kind == KIND_NONE)
                    record.answers_total = len(answered)
                    break
        records.append(record)
    return SimulationReport(records=records, cap=cap, option_count=runtime.option_count)


def replay_winning(runtime: Runtime, example: Example, record: ExampleRecord) -> bool:
    """Re-apply a recorded winning answer set and confirm it still reproduces
    the gold SQL (simulator soundness)."""
    if not record.winning_answers:
        return False
    schema = runtime.schema(example.db_id)
    gold = sql_ir.parse_sql(example.gold_sql, schema)
    pipeline = run_pipeline_once(runtime, example.question, example.db_id)
    by_index = {q.token_index: q for q in pipeline.questions}
    answers = []
    for entry in record.winning_answers:
        q = by_index[entry["token_index"]]
        answers.append((q.token_index, q.option(entry["option_index"])))
    modified = apply_answers(pipeline.tagged, answers)
    predicted = runtime.gateway.parse(modified.text, example.db_id, runtime.endpoint)
    return sql_ir.canonical_equal(predicted, gold)
