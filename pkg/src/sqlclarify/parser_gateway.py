"""Uniform access to black-box text-to-SQL parsers.

Adapters see a question and a database id and return SQL text; nothing else
crosses the boundary. The builtin toy parser grounds only exact schema-name
mentions, quoted values, and bare numbers, and silently drops anything it
cannot ground; that makes it exactly the kind of parser the clarification
loop helps, at desk scale. Subprocess and HTTP adapters wrap real parsers.
"""

from __future__ import annotations

import hashlib
import json
import select as _select
import shlex
import subprocess
import threading
from dataclasses import dataclass, field

from .errors import GatewayError
from .schema_store import DatabaseSchema
from .sql_ir import SqlQuery, parse_sql
from .text import is_number_token, lemmatize, tokenize

KIND_TOY = "builtin_toy"
KIND_ORACLE = "builtin_oracle"
KIND_SUBPROCESS = "subprocess"
KIND_HTTP = "http"


@dataclass(frozen=True)
class ParserEndpoint:
    kind: str = KIND_TOY
    location: str = ""  # command line (subprocess) or URL (http)
    timeout: float = 30.0
    strictness: float = 1.0  # toy only: survival probability of unmarked mentions
    seed: int = 0

    def __post_init__(self):
        if self.kind in (KIND_SUBPROCESS, KIND_HTTP) and not self.location:
            raise GatewayError(f"{self.kind} endpoint requires a location")
        if not 0.0 <= self.strictness <= 1.0:
            raise GatewayError("strictness must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Builtin toy parser

_AGG_WORDS = {
    "maximum": "max",
    "minimum": "min",
    "total": "sum",
    "sum": "sum",
    "average": "avg",
    "count": "count",
}
_AGG_BIGRAMS = {("how", "many"): "count", ("number", "of"): "count"}
_MOST_WORDS = {"most", "highest", "largest", "top", "biggest"}
_LEAST_WORDS = {"least", "lowest", "smallest", "fewest"}
_OP_BEFORE = {
    ("greater", "than"): ">",
    ("more", "than"): ">",
    ("less", "than"): "<",
    ("fewer", "than"): "<",
    ("at", "least"): ">=",
    ("at", "most"): "<=",
}
_FILTER_MARKERS = {"whose", "where"}


@dataclass
class _Mention:
    start: int
    end: int  # exclusive
    kind: str  # "column" | "table"
    table: str
    name: str
    marked: bool = False


class ToyParser:
    """Keyword-and-mention grounding over one schema.

    Recognizes multiword names both as single underscored tokens and as
    space-separated n-grams, tolerates plural table mentions, maps agg and
    comparison phrases, and attaches values to the nearest preceding column.
    Ungroundable tokens are dropped without a trace. With strictness < 1,
    recognized mentions that are not marked by an explicit cue ("whose X",
    "of Y", quoting) are dropped pseudo-randomly but deterministically.
    """

    def __init__(self, schema: DatabaseSchema, strictness: float = 1.0, seed: int = 0):
        self.schema = schema
        self.strictness = strictness
        self.seed = seed
        self._names: list[tuple[tuple[str, ...], str, str, str]] = []  # (words, kind, table, name)
        for table in schema.tables:
            self._names.append(((table.name,), "table", table.name, table.name))
            self._names.append((tuple(table.name.split("_")), "table", table.name, table.name))
            for col in table.columns:
                self._names.append(((col.name,), "column", table.name, col.name))
                self._names.append((tuple(col.name.split("_")), "column", table.name, col.name))
        self._names.sort(key=lambda entry: -len(entry[0]))

    def parse(self, question: str) -> str:
        tokens = tokenize(question)
        mentions = self._find_mentions(tokens)
        mentions = self._apply_strictness(tokens, mentions, question)
        return self._assemble(tokens, mentions)

    # --- recognition ---

    def _find_mentions(self, tokens: list[str]) -> list[_Mention]:
        claimed = [False] * len(tokens)
        mentions: list[_Mention] = []
        for words, kind, table, name in self._names:
            n = len(words)
            for i in range(0, len(tokens) - n + 1):
                if any(claimed[i : i + n]):
                    continue
                window = tuple(tokens[i : i + n])
                # columns must match exactly; table mentions tolerate plurals
                hit = window == words or (kind == "table" and tuple(map(lemmatize, window)) == words)
                if hit:
                    for j in range(i, i + n):
                        claimed[j] = True
                    mentions.append(_Mention(i, i + n, kind, table, name))
        mentions.sort(key=lambda m: m.start)
        for m in mentions:
            prev = tokens[m.start - 1] if m.start else ""
            nxt = tokens[m.end] if m.end < len(tokens) else ""
            if m.kind == "column":
                m.marked = prev in ("whose", "with") or nxt in ("is", "are")
            else:
                m.marked = prev in ("of", "from", "in")
        return mentions

    def _apply_strictness(self, tokens, mentions: list[_Mention], question: str) -> list[_Mention]:
        if self.strictness >= 1.0:
            return mentions
        kept = []
        for m in mentions:
            if m.marked:
                kept.append(m)
                continue
            digest = hashlib.sha256(f"{self.seed}|{question}|{m.start}|{m.name}".encode()).digest()
            draw = int.from_bytes(digest[:8], "big") / 2**64
            if draw < self.strictness:
                kept.append(m)
        return kept

    # --- assembly ---

    def _assemble(self, tokens: list[str], mentions: list[_Mention]) -> str:
        by_start = {m.start: m for m in mentions}
        n = len(tokens)

        order_clauses: list[tuple[_Mention, str]] = []
        superlative = None  # (direction, column mention or "count")
        superlative_count_pos = None
        limit = None

        # sort/limit/superlative phrases claim their targets first
        i = 0
        while i < n:
            if tokens[i] == "sorted" and i + 1 < n and tokens[i + 1] == "by":
                col = next((m for m in mentions if m.start >= i + 2 and m.kind == "column"), None)
                direction = "asc"
                for j in range(i + 2, min(i + 8, n)):
                    if tokens[j] == "descending":
                        direction = "desc"
                        break
                    if tokens[j] == "ascending":
                        break
                if col is not None:
                    order_clauses.append((col, direction))
                i += 2
                continue
            if tokens[i] == "limited" and i + 3 < n and tokens[i + 1] == "to" and tokens[i + 2] == "first":
                if is_number_token(tokens[i + 3]):
                    limit = int(float(tokens[i + 3]))
                i += 4
                continue
            if superlative is None and (tokens[i] in _MOST_WORDS or tokens[i] in _LEAST_WORDS):
                direction = "desc" if tokens[i] in _MOST_WORDS else "asc"
                target = next(
                    (m for m in mentions if i < m.start <= i + 3 and m.kind == "column"), None
                )
                if target is not None:
                    superlative = (direction, target)
                else:
                    for j in range(i + 1, min(i + 3, n - 1)):
                        if (tokens[j], tokens[j + 1]) in _AGG_BIGRAMS:
                            superlative = (direction, "count")
                            superlative_count_pos = j
                            break
            i += 1

        # aggregation phrases (skip the one consumed by a count superlative)
        agg_at: dict[int, str] = {}
        for i in range(n):
            if superlative_count_pos is not None and i == superlative_count_pos:
                continue
            if i + 1 < n and (tokens[i], tokens[i + 1]) in _AGG_BIGRAMS:
                agg_at[i] = _AGG_BIGRAMS[(tokens[i], tokens[i + 1])]
            elif tokens[i] in _AGG_WORDS:
                agg_at[i] = _AGG_WORDS[tokens[i]]

        order_targets = {id(m) for m, _ in order_clauses}
        if superlative is not None and superlative[1] != "count":
            order_targets.add(id(superlative[1]))

        # filter boundary: explicit marker, or the first column followed
        # closely by a comparison or value (sort phrases don't count)
        boundary = n
        for i, tok in enumerate(tokens):
            if tok in _FILTER_MARKERS:
                boundary = i
                break
            m = by_start.get(i)
            if m is not None and m.kind == "column" and id(m) not in order_targets:
                look = tokens[m.end : m.end + 4]
                for stop_word in ("sorted", "limited", "ascending", "descending", "order"):
                    if stop_word in look:
                        look = look[: look.index(stop_word)]
                # a value right after the column, or a comparison phrase nearby
                if any(is_number_token(t) or t.startswith("'") for t in look[:2]) or any(
                    (a, b) in _OP_BEFORE for a, b in zip(look, look[1:])
                ):
                    boundary = i
                    break

        select_items: list[tuple[str | None, _Mention | None]] = []  # (agg, column mention)
        tables: list[str] = []
        pending_agg: str | None = None
        for i in range(n):
            m = by_start.get(i)
            if i in agg_at and i < boundary:
                pending_agg = agg_at[i]
            if m is None:
                continue
            if m.kind == "table":
                if m.table not in tables:
                    tables.append(m.table)
                continue
            if id(m) in order_targets:
                continue
            if i < boundary:
                select_items.append((pending_agg, m))
                pending_agg = None
        if pending_agg == "count":
            select_items.append((pending_agg, None))

        # predicates
        predicates: list[tuple[_Mention, str, str]] = []
        pend_col: _Mention | None = None
        pend_op: str | None = None
        between_low: str | None = None
        for i in range(boundary, n):
            m = by_start.get(i)
            if m is not None and m.kind == "column":
                pend_col = m
                pend_op = None
                between_low = None
                continue
            if m is not None:
                if m.table not in tables:
                    tables.append(m.table)
                continue
            tok = tokens[i]
            if i + 1 < n and (tokens[i], tokens[i + 1]) in _OP_BEFORE:
                pend_op = _OP_BEFORE[(tokens[i], tokens[i + 1])]
                continue
            if tok == "between":
                pend_op = "between"
                continue
            if tok == "not":
                pend_op = "!="
                continue
            if is_number_token(tok) or tok.startswith("'"):
                if pend_col is None:
                    continue  # dangling value: dropped
                value = _value_sql(tok)
                if pend_op == "between":
                    if between_low is None:
                        between_low = value
                        continue
                    predicates.append((pend_col, "between", f"{between_low} AND {value}"))
                    pend_col = None
                    pend_op = None
                    between_low = None
                    continue
                predicates.append((pend_col, pend_op or "=", value))
                pend_col = None
                pend_op = None

        return self._render(tokens, select_items, tables, predicates, order_clauses, superlative, limit)

    def _render(self, tokens, select_items, tables, predicates, order_clauses, superlative, limit) -> str:
        used_tables: list[str] = []

        def claim(table: str):
            if table not in used_tables:
                used_tables.append(table)

        for t in tables:
            claim(t)
        for _, m in select_items:
            if m is not None:
                claim(m.table)
        for m, _, _ in predicates:
            claim(m.table)
        for m, _ in order_clauses:
            claim(m.table)
        if superlative is not None and superlative[1] != "count":
            claim(superlative[1].table)
        if not used_tables:
            used_tables.append(self.schema.tables[0].name)  # parsers always guess
        used_tables.sort(key=lambda t: [x.name for x in self.schema.tables].index(t))

        qualify = len(used_tables) > 1

        def col_sql(m: _Mention) -> str:
            return f"{m.table}.{m.name}" if qualify else m.name

        items = []
        for agg, m in select_items:
            if m is not None:
                items.append(f"{agg.upper()}({col_sql(m)})" if agg else col_sql(m))
            elif agg == "count":
                items.append("count(*)")
        if not items:
            items = ["*"]

        sql = "SELECT " + ", ".join(items)
        sql += " FROM " + self._from_chain(used_tables)
        if predicates:
            parts = []
            for m, op, value in predicates:
                if op == "between":
                    parts.append(f"{col_sql(m)} BETWEEN {value}")
                else:
                    parts.append(f"{col_sql(m)} {op} {value}")
            sql += " WHERE " + " AND ".join(parts)
        plain_cols = [col_sql(m) for agg, m in select_items if m is not None and not agg]
        has_agg = any(agg for agg, _ in select_items) or (
            superlative is not None and superlative[1] == "count"
        )
        if has_agg and plain_cols:
            sql += " GROUP BY " + ", ".join(dict.fromkeys(plain_cols))
        if superlative is not None:
            direction, target = superlative
            target_sql = "count(*)" if target == "count" else col_sql(target)
            sql += f" ORDER BY {target_sql} {'DESC' if direction == 'desc' else 'ASC'} LIMIT 1"
        elif order_clauses:
            parts = [f"{col_sql(m)} {'DESC' if d == 'desc' else 'ASC'}" for m, d in order_clauses]
            sql += " ORDER BY " + ", ".join(parts)
            if limit is not None:
                sql += f" LIMIT {limit}"
        return sql

    def _from_chain(self, tables: list[str]) -> str:
        # insert one-hop bridge tables where consecutive tables share no column
        chain = [tables[0]]
        for current in tables[1:]:
            prev = chain[-1]
            if self._shared_column(prev, current) is None:
                bridge = next(
                    (
                        t.name
                        for t in self.schema.tables
                        if t.name not in chain
                        and t.name != current
                        and self._shared_column(prev, t.name)
                        and self._shared_column(t.name, current)
                    ),
                    None,
                )
                if bridge is not None:
                    chain.append(bridge)
            chain.append(current)
        text = chain[0]
        for prev, current in zip(chain, chain[1:]):
            shared = self._shared_column(prev, current)
            if shared:
                text += f" JOIN {current} ON {prev}.{shared} = {current}.{shared}"
            else:
                text += f" JOIN {current}"
        return text

    def _shared_column(self, a: str, b: str) -> str | None:
        cols_a = {c.name for c in self.schema.table(a).columns}
        for c in self.schema.table(b).columns:
            if c.name in cols_a:
                return c.name
        return None


def _value_sql(token: str) -> str:
    if token.startswith("'") or token.startswith('"'):
        inner = token[1:-1]
        return "'" + inner.replace("'", "''") + "'"
    return token


# ---------------------------------------------------------------------------
# Adapters and the gateway


class _SubprocessAdapter:
    """Line protocol: one JSON request per line on the child's stdin, one
    JSON response per line on its stdout ({sql} or {error})."""

    def __init__(self, command: str, timeout: float):
        self.command = command
        self.timeout = timeout
        self._lock = threading.Lock()
        self._child: subprocess.Popen | None = None

    def _ensure_child(self) -> subprocess.Popen:
        if self._child is None or self._child.poll() is not None:
            self._child = subprocess.Popen(
                shlex.split(self.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        return self._child

    def request(self, question: str, db_id: str) -> str:
        with self._lock:
            child = self._ensure_child()
            try:
                child.stdin.write(json.dumps({"question": question, "db_id": db_id}) + "\n")
                child.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise GatewayError("subprocess adapter pipe closed", str(exc)) from exc
            ready, _, _ = _select.select([child.stdout], [], [], self.timeout)
            if not ready:
                child.kill()
                self._child = None
                raise GatewayError(f"subprocess adapter timed out after {self.timeout}s")
            line = child.stdout.readline()
        if not line:
            code = child.poll()
            raise GatewayError("subprocess adapter closed its output", f"exit code {code}")
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise GatewayError("subprocess adapter sent invalid JSON", line.strip()) from exc
        if "error" in payload:
            raise GatewayError("subprocess adapter reported an error", str(payload["error"]))
        if "sql" not in payload:
            raise GatewayError("subprocess adapter response lacks 'sql'", line.strip())
        return payload["sql"]


class _HttpAdapter:
    def __init__(self, url: str, timeout: float):
        self.url = url
        self.timeout = timeout

    def request(self, question: str, db_id: str) -> str:
        import httpx

        try:
            response = httpx.post(self.url, json={"question": question, "db_id": db_id}, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise GatewayError("http adapter request failed", str(exc)) from exc
        if response.status_code != 200:
            raise GatewayError(f"http adapter returned status {response.status_code}", response.text[:200])
        payload = response.json()
        if "error" in payload:
            raise GatewayError("http adapter reported an error", str(payload["error"]))
        if "sql" not in payload:
            raise GatewayError("http adapter response lacks 'sql'")
        return payload["sql"]


@dataclass
class Gateway:
    """Resolves endpoints to adapters and parses their SQL text against the
    schema. The only channel to any parser is question in, SQL out."""

    schemas: dict[str, DatabaseSchema]
    _toys: dict = field(default_factory=dict)
    _adapters: dict = field(default_factory=dict)

    @classmethod
    def from_list(cls, schemas: list[DatabaseSchema]) -> "Gateway":
        return cls(schemas={s.db_id: s for s in schemas})

    def schema(self, db_id: str) -> DatabaseSchema:
        if db_id not in self.schemas:
            raise GatewayError(f"unknown db_id {db_id!r}")
        return self.schemas[db_id]

    def parse(self, question: str, db_id: str, endpoint: ParserEndpoint) -> SqlQuery:
        schema = self.schema(db_id)
        if endpoint.kind in (KIND_TOY, KIND_ORACLE):
            strictness = 1.0 if endpoint.kind == KIND_ORACLE else endpoint.strictness
            key = (db_id, strictness, endpoint.seed)
            toy = self._toys.get(key)
            if toy is None:
                toy = self._toys[key] = ToyParser(schema, strictness=strictness, seed=endpoint.seed)
            sql_text = toy.parse(question)
        elif endpoint.kind == KIND_SUBPROCESS:
            adapter = self._adapters.get(endpoint)
            if adapter is None:
                adapter = self._adapters[endpoint] = _SubprocessAdapter(endpoint.location, endpoint.timeout)
            sql_text = adapter.request(question, db_id)
        elif endpoint.kind == KIND_HTTP:
            adapter = self._adapters.get(endpoint)
            if adapter is None:
                adapter = self._adapters[endpoint] = _HttpAdapter(endpoint.location, endpoint.timeout)
            sql_text = adapter.request(question, db_id)
        else:
            raise GatewayError(f"unknown endpoint kind {endpoint.kind!r}")
        try:
            return parse_sql(sql_text, schema)
        except Exception as exc:
            raise GatewayError(f"adapter produced invalid SQL {sql_text!r}", str(exc)) from exc
