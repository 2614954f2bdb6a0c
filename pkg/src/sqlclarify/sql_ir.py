"""SQL subset parser, intermediate query tree, and exact-match equality.

Supported SQL shape (case-insensitive keywords, aliases normalized away):

    SELECT [DISTINCT] item, ...            item := [agg(] [DISTINCT] col | * [)]
    FROM table [AS a] [JOIN table [AS b] [ON col = col [AND ...]]]*
    [WHERE bool] [GROUP BY col, ...] [HAVING bool]
    [ORDER BY target [ASC|DESC], ...] [LIMIT n]
    [INTERSECT | UNION | EXCEPT <query>]

    bool := disjunction/conjunction tree of predicates;
    predicate := target op (value | (subquery)) | col BETWEEN v AND v
                 | col [NOT] IN (subquery) | col [NOT] LIKE value

The intermediate tree strips execution-only structure: JOIN and GROUP BY
never appear as tree nodes. Grouping is re-synthesized on the way back
(group by every non-aggregated select column), and the FROM chain rides
along as reconstruction data that is never verbalized.

Outside the subset: arithmetic, window functions, OUTER joins, NULL tests,
EXISTS, multiple set operations.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .errors import NameResolutionError, SqlSyntaxError, UnsupportedConstructError
from .schema_store import AGGREGATIONS, DatabaseSchema

COMPARISON_OPS = ("=", "!=", ">", "<", ">=", "<=")
NESTABLE_OPS = ("in", "not in", "=", ">", "<", ">=", "<=")


# ---------------------------------------------------------------------------
# Query structures


@dataclass(frozen=True)
class ColumnRef:
    table: str | None  # None only for "*"
    column: str

    @property
    def is_star(self) -> bool:
        return self.column == "*"


STAR = ColumnRef(None, "*")


@dataclass(frozen=True)
class AggTarget:
    column: ColumnRef
    agg: str | None = None
    distinct: bool = False


@dataclass(frozen=True)
class Value:
    kind: str  # "str" | "num"
    text: str

    @property
    def number(self) -> float:
        return float(self.text)


@dataclass(frozen=True)
class Predicate:
    left: AggTarget
    op: str
    right: object  # Value | SqlQuery | tuple[Value, Value] for between

    def __post_init__(self):
        if isinstance(self.right, SqlQuery) and self.op not in NESTABLE_OPS:
            raise SqlSyntaxError(f"operator {self.op!r} cannot take a subquery")


@dataclass(frozen=True)
class BoolGroup:
    """A nested and/or group inside a condition list."""

    op: str  # "and" | "or"
    items: tuple  # Predicate | BoolGroup


@dataclass(frozen=True)
class JoinCond:
    left: ColumnRef
    right: ColumnRef


@dataclass(frozen=True)
class OrderItem:
    target: AggTarget
    direction: str = "asc"


@dataclass(frozen=True)
class SqlQuery:
    select: tuple[AggTarget, ...]
    tables: tuple[str, ...]
    joins: tuple[JoinCond, ...] = ()
    where: tuple = ()  # top-level conjuncts: Predicate | BoolGroup("or", ...)
    group_by: tuple[ColumnRef, ...] = ()
    having: tuple = ()
    order_by: tuple[OrderItem, ...] = ()
    limit: int | None = None
    set_op: tuple | None = None  # (kind, SqlQuery)
    distinct: bool = False

    def __post_init__(self):
        if self.having and not self.group_by:
            raise SqlSyntaxError("HAVING requires GROUP BY")
        if self.set_op is not None:
            kind, right = self.set_op
            if len(right.select) != len(self.select):
                raise SqlSyntaxError(f"{kind.upper()} operands must have equal select arity")


# ---------------------------------------------------------------------------
# Tokenizer

_SQL_TOKEN = re.compile(
    r"""\s*(?:
        (?P<str>'(?:[^']|'')*'|"(?:[^"]|"")*")
      | (?P<num>\d+\.\d+|\.\d+|\d+)
      | (?P<op><>|!=|>=|<=|=|>|<)
      | (?P<punct>[(),;*])
      | (?P<word>[A-Za-z_][A-Za-z0-9_]*(?:\.(?:[A-Za-z_][A-Za-z0-9_]*|\*))?)
    )""",
    re.VERBOSE,
)


def _tokenize_sql(text: str) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    pos = 0
    while pos < len(text):
        match = _SQL_TOKEN.match(text, pos)
        if not match:
            if text[pos:].strip():
                raise SqlSyntaxError(f"unexpected character {text[pos:].strip()[0]!r}", position=len(tokens))
            break
        pos = match.end()
        for kind in ("str", "num", "op", "punct", "word"):
            value = match.group(kind)
            if value is not None:
                tokens.append((kind, value))
                break
    return tokens


_KEYWORDS = {
    "select", "distinct", "from", "join", "inner", "on", "as", "where", "group",
    "order", "by", "having", "limit", "and", "or", "not", "in", "like", "between",
    "intersect", "union", "except", "asc", "desc",
}


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]], schema: DatabaseSchema):
        self.tokens = tokens
        self.schema = schema
        self.pos = 0

    # --- token helpers ---

    def peek_kw(self) -> str | None:
        if self.pos < len(self.tokens):
            kind, value = self.tokens[self.pos]
            if kind == "word" and value.lower() in _KEYWORDS:
                return value.lower()
        return None

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> tuple[str, str]:
        if self.pos >= len(self.tokens):
            raise SqlSyntaxError("unexpected end of input", position=self.pos)
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def accept_kw(self, *words: str) -> str | None:
        kw = self.peek_kw()
        if kw in words:
            self.pos += 1
            return kw
        return None

    def expect_kw(self, word: str):
        if not self.accept_kw(word):
            raise SqlSyntaxError(f"expected {word.upper()}", position=self.pos)

    def accept_punct(self, ch: str) -> bool:
        tok = self.peek()
        if tok and tok[0] == "punct" and tok[1] == ch:
            self.pos += 1
            return True
        return False

    def expect_punct(self, ch: str):
        if not self.accept_punct(ch):
            raise SqlSyntaxError(f"expected {ch!r}", position=self.pos)

    # --- grammar ---

    def parse_statement(self) -> SqlQuery:
        left = self.parse_query()
        kind = self.accept_kw("intersect", "union", "except")
        if kind:
            right = self.parse_query()
            left = replace(left, set_op=(kind, right))
        self.accept_punct(";")
        if self.pos != len(self.tokens):
            raise SqlSyntaxError(f"trailing input {self.tokens[self.pos][1]!r}", position=self.pos)
        return left

    def parse_query(self) -> SqlQuery:
        self.expect_kw("select")
        distinct = bool(self.accept_kw("distinct"))
        raw_select = [self.parse_select_item()]
        while self.accept_punct(","):
            raw_select.append(self.parse_select_item())

        self.expect_kw("from")
        tables, aliases, joins = self.parse_from()

        raw_where: tuple = ()
        if self.accept_kw("where"):
            raw_where = self.parse_condition_list(aliases, tables)

        group_by: list[ColumnRef] = []
        if self.accept_kw("group"):
            self.expect_kw("by")
            group_by.append(self.resolve_column(self.parse_column_name(), aliases, tables))
            while self.accept_punct(","):
                group_by.append(self.resolve_column(self.parse_column_name(), aliases, tables))

        raw_having: tuple = ()
        if self.accept_kw("having"):
            raw_having = self.parse_condition_list(aliases, tables)

        order_by: list[OrderItem] = []
        if self.accept_kw("order"):
            self.expect_kw("by")
            order_by.append(self.parse_order_item(aliases, tables))
            while self.accept_punct(","):
                order_by.append(self.parse_order_item(aliases, tables))

        limit = None
        if self.accept_kw("limit"):
            kind, value = self.take()
            if kind != "num" or "." in value:
                raise SqlSyntaxError("LIMIT expects a nonnegative integer", position=self.pos - 1)
            limit = int(value)

        select = tuple(self.resolve_target(t, aliases, tables) for t in raw_select)
        return SqlQuery(
            select=select,
            tables=tuple(tables),
            joins=tuple(joins),
            where=raw_where,
            group_by=tuple(group_by),
            having=raw_having,
            order_by=tuple(order_by),
            limit=limit,
            distinct=distinct,
        )

    def parse_select_item(self):
        kw = self.peek()
        if kw and kw[0] == "word" and kw[1].lower() in AGGREGATIONS:
            agg = self.take()[1].lower()
            self.expect_punct("(")
            distinct = bool(self.accept_kw("distinct"))
            name = "*" if self.accept_punct("*") else self.parse_column_name()
            self.expect_punct(")")
            return (agg, name, distinct)
        if self.accept_punct("*"):
            return (None, "*", False)
        distinct = bool(self.accept_kw("distinct"))
        return (None, self.parse_column_name(), distinct)

    def parse_column_name(self) -> str:
        kind, value = self.take()
        if kind != "word" or value.lower() in _KEYWORDS:
            raise SqlSyntaxError(f"expected column name, got {value!r}", position=self.pos - 1)
        return value

    def parse_from(self):
        tables: list[str] = []
        aliases: dict[str, str] = {}
        joins: list[JoinCond] = []
        self.parse_table_ref(tables, aliases)
        while True:
            if self.accept_kw("join") or (self.accept_kw("inner") and (self.expect_kw("join") or True)):
                self.parse_table_ref(tables, aliases)
                if self.accept_kw("on"):
                    joins.append(self.parse_join_cond(aliases, tables))
                    while self.accept_kw("and"):
                        joins.append(self.parse_join_cond(aliases, tables))
            elif self.accept_punct(","):
                self.parse_table_ref(tables, aliases)
            else:
                break
        return tables, aliases, joins

    def parse_table_ref(self, tables: list[str], aliases: dict[str, str]):
        kind, name = self.take()
        if kind != "word" or name.lower() in _KEYWORDS:
            raise SqlSyntaxError(f"expected table name, got {name!r}", position=self.pos - 1)
        table = self.schema.table(name) or self.schema.table(name.lower())
        if table is None:
            raise NameResolutionError(name, f"unknown table {name!r} in db {self.schema.db_id!r}")
        tables.append(table.name)
        alias = None
        if self.accept_kw("as"):
            alias = self.take()[1]
        else:
            tok = self.peek()
            if tok and tok[0] == "word" and tok[1].lower() not in _KEYWORDS and self.schema.table(tok[1]) is None:
                alias = self.take()[1]
        if alias:
            aliases[alias.lower()] = table.name
        aliases.setdefault(table.name.lower(), table.name)

    def parse_join_cond(self, aliases, tables) -> JoinCond:
        left = self.resolve_column(self.parse_column_name(), aliases, tables)
        kind, op = self.take()
        if op != "=":
            raise SqlSyntaxError("join conditions must be equalities", position=self.pos - 1)
        right = self.resolve_column(self.parse_column_name(), aliases, tables)
        return JoinCond(left, right)

    def parse_order_item(self, aliases, tables) -> OrderItem:
        raw = self.parse_select_item()
        target = self.resolve_target(raw, aliases, tables)
        direction = self.accept_kw("asc", "desc") or "asc"
        return OrderItem(target=target, direction=direction)

    # Boolean conditions: OR has lowest precedence; the result is returned as
    # a tuple of top-level conjuncts so exact matching can treat it as a set.
    def parse_condition_list(self, aliases, tables) -> tuple:
        node = self.parse_or(aliases, tables)
        if isinstance(node, BoolGroup) and node.op == "and":
            return node.items
        return (node,)

    def parse_or(self, aliases, tables):
        items = [self.parse_and(aliases, tables)]
        while self.accept_kw("or"):
            items.append(self.parse_and(aliases, tables))
        return items[0] if len(items) == 1 else BoolGroup("or", tuple(items))

    def parse_and(self, aliases, tables):
        items = [self.parse_atom(aliases, tables)]
        while self.accept_kw("and"):
            items.append(self.parse_atom(aliases, tables))
        if len(items) == 1:
            return items[0]
        flat: list = []
        for item in items:
            if isinstance(item, BoolGroup) and item.op == "and":
                flat.extend(item.items)
            else:
                flat.append(item)
        return BoolGroup("and", tuple(flat))

    def parse_atom(self, aliases, tables):
        if self.accept_punct("("):
            if self.peek_kw() == "select":
                raise SqlSyntaxError("bare subquery cannot be a condition", position=self.pos)
            node = self.parse_or(aliases, tables)
            self.expect_punct(")")
            return node
        return self.parse_predicate(aliases, tables)

    def parse_predicate(self, aliases, tables) -> Predicate:
        left = self.resolve_target(self.parse_select_item(), aliases, tables)
        negated = bool(self.accept_kw("not"))
        if self.accept_kw("between"):
            if negated:
                raise SqlSyntaxError("NOT BETWEEN is not supported", position=self.pos)
            low = self.parse_value()
            self.expect_kw("and")
            high = self.parse_value()
            return Predicate(left, "between", (low, high))
        if self.accept_kw("in"):
            self.expect_punct("(")
            sub = self.parse_subquery()
            self.expect_punct(")")
            return Predicate(left, "not in" if negated else "in", sub)
        if self.accept_kw("like"):
            return Predicate(left, "not like" if negated else "like", self.parse_value())
        if negated:
            raise SqlSyntaxError("NOT must precede IN or LIKE", position=self.pos)
        tok = self.take()
        if tok[0] != "op":
            raise SqlSyntaxError(f"expected comparison operator, got {tok[1]!r}", position=self.pos - 1)
        op = "!=" if tok[1] == "<>" else tok[1]
        if self.accept_punct("("):
            sub = self.parse_subquery()
            self.expect_punct(")")
            return Predicate(left, op, sub)
        return Predicate(left, op, self.parse_value())

    def parse_subquery(self) -> SqlQuery:
        if self.peek_kw() != "select":
            raise SqlSyntaxError("expected subquery", position=self.pos)
        return self.parse_query()

    def parse_value(self) -> Value:
        kind, value = self.take()
        if kind == "str":
            quote = value[0]
            inner = value[1:-1].replace(quote * 2, quote)
            return Value("str", inner)
        if kind == "num":
            return Value("num", value)
        raise SqlSyntaxError(f"expected literal value, got {value!r}", position=self.pos - 1)

    # --- name resolution ---

    def resolve_target(self, raw: tuple, aliases, tables) -> AggTarget:
        agg, name, distinct = raw
        if name == "*":
            if agg is None and distinct:
                raise SqlSyntaxError("DISTINCT * is not supported")
            return AggTarget(STAR, agg=agg, distinct=distinct)
        return AggTarget(self.resolve_column(name, aliases, tables), agg=agg, distinct=distinct)

    def resolve_column(self, name: str, aliases: dict[str, str], tables: list[str]) -> ColumnRef:
        if "." in name:
            qualifier, col = name.split(".", 1)
            table_name = aliases.get(qualifier.lower())
            if table_name is None:
                raise NameResolutionError(qualifier, f"unknown table or alias {qualifier!r}")
            if col == "*":
                raise UnsupportedConstructError("qualified * is not supported")
            table = self.schema.table(table_name)
            if table.column(col) is None and table.column(col.lower()) is None:
                raise NameResolutionError(col, f"table {table_name!r} has no column {col!r}")
            actual = table.column(col) or table.column(col.lower())
            return ColumnRef(table_name, actual.name)
        owners = [t for t in tables if self.schema.table(t).column(name) is not None]
        if not owners:
            owners = [t for t in tables if self.schema.table(t).column(name.lower()) is not None]
            name = name.lower()
        if not owners:
            raise NameResolutionError(name, f"no table in FROM clause has column {name!r}")
        if len(owners) > 1:
            raise NameResolutionError(name, f"column {name!r} is ambiguous across {owners}; qualify it")
        return ColumnRef(owners[0], name)


def parse_sql(text: str, schema: DatabaseSchema) -> SqlQuery:
    """Parse SQL text into a resolved SqlQuery, or raise SqlSyntaxError /
    NameResolutionError."""
    tokens = _tokenize_sql(text)
    if not tokens:
        raise SqlSyntaxError("empty SQL text")
    return _Parser(tokens, schema).parse_statement()


# ---------------------------------------------------------------------------
# Pretty printer


def to_sql_text(q: SqlQuery) -> str:
    """Canonical SQL text: uppercase keywords, single spaces, single quotes."""
    qualify = len(q.tables) > 1
    parts = ["SELECT"]
    if q.distinct:
        parts.append("DISTINCT")
    parts.append(", ".join(_target_text(t, qualify) for t in q.select))
    parts.append("FROM")
    from_text = q.tables[0]
    joins = list(q.joins)
    seen = {q.tables[0]}
    for t in q.tables[1:]:
        from_text += f" JOIN {t}"
        seen.add(t)
        # attach each condition to the first join at which both sides exist
        applicable = [j for j in joins if j.left.table in seen and j.right.table in seen]
        if applicable:
            conds = " AND ".join(f"{_col_text(j.left, True)} = {_col_text(j.right, True)}" for j in applicable)
            from_text += f" ON {conds}"
            joins = [j for j in joins if j not in applicable]
    parts.append(from_text)
    if q.where:
        parts.append("WHERE " + _cond_list_text(q.where, qualify))
    if q.group_by:
        parts.append("GROUP BY " + ", ".join(_col_text(c, qualify) for c in q.group_by))
    if q.having:
        parts.append("HAVING " + _cond_list_text(q.having, qualify))
    if q.order_by:
        parts.append(
            "ORDER BY "
            + ", ".join(f"{_target_text(o.target, qualify)} {o.direction.upper()}" for o in q.order_by)
        )
    if q.limit is not None:
        parts.append(f"LIMIT {q.limit}")
    text = " ".join(parts)
    if q.set_op is not None:
        kind, right = q.set_op
        text += f" {kind.upper()} {to_sql_text(right)}"
    return text


def _col_text(c: ColumnRef, qualify: bool) -> str:
    if c.is_star:
        return "*"
    return f"{c.table}.{c.column}" if qualify and c.table else c.column


def _target_text(t: AggTarget, qualify: bool) -> str:
    inner = _col_text(t.column, qualify)
    if t.distinct and t.agg:
        inner = f"DISTINCT {inner}"
    if t.agg:
        return f"{t.agg.upper()}({inner})"
    if t.distinct:
        return f"DISTINCT {inner}"
    return inner


def _value_text(v: Value) -> str:
    if v.kind == "str":
        return "'" + v.text.replace("'", "''") + "'"
    return v.text


def _cond_list_text(conds: tuple, qualify: bool) -> str:
    return " AND ".join(_cond_text(c, qualify) for c in conds)


def _cond_text(node, qualify: bool) -> str:
    if isinstance(node, BoolGroup):
        sep = f" {node.op.upper()} "
        inner = sep.join(_cond_text(i, qualify) for i in node.items)
        return f"({inner})"
    pred: Predicate = node
    left = _target_text(pred.left, qualify)
    if pred.op == "between":
        low, high = pred.right
        return f"{left} BETWEEN {_value_text(low)} AND {_value_text(high)}"
    if isinstance(pred.right, SqlQuery):
        return f"{left} {pred.op.upper()} ({to_sql_text(pred.right)})"
    return f"{left} {pred.op.upper()} {_value_text(pred.right)}"


# ---------------------------------------------------------------------------
# Exact-match equality


def canon(q: SqlQuery):
    """Canonical hashable form: select/where/having as sorted multisets,
    join conditions as an unordered set, order_by kept ordered."""
    select = tuple(sorted(map(_canon_target, q.select)))
    tables = tuple(sorted(q.tables))
    joins = tuple(sorted(frozenset((_canon_col(j.left), _canon_col(j.right))) for j in q.joins))
    where = tuple(sorted(map(_canon_cond, q.where)))
    group = tuple(sorted(map(_canon_col, q.group_by)))
    having = tuple(sorted(map(_canon_cond, q.having)))
    order = tuple((_canon_target(o.target), o.direction) for o in q.order_by)
    set_op = None
    if q.set_op is not None:
        set_op = (q.set_op[0], canon(q.set_op[1]))
    return (
        "query", q.distinct, select, tables, joins, where, group, having, order, q.limit, set_op,
    )


def _canon_col(c: ColumnRef):
    return (c.table or "", c.column)


def _canon_target(t: AggTarget):
    return (t.agg or "", _canon_col(t.column), t.distinct)


def _canon_value(v: Value):
    if v.kind == "num":
        return ("num", float(v.text))
    return ("str", v.text)


def _canon_cond(node):
    if isinstance(node, BoolGroup):
        return (node.op, tuple(sorted(map(_canon_cond, node.items))))
    pred: Predicate = node
    if pred.op == "between":
        right = ("pair", _canon_value(pred.right[0]), _canon_value(pred.right[1]))
    elif isinstance(pred.right, SqlQuery):
        right = canon(pred.right)
    else:
        right = _canon_value(pred.right)
    return ("pred", _canon_target(pred.left), pred.op, right)


def canonical_equal(a: SqlQuery, b: SqlQuery) -> bool:
    """Exact-match comparison: select items and conjuncts as multisets,
    order_by positional, literals case-sensitive after quote normalization."""
    return canon(a) == canon(b)


# ---------------------------------------------------------------------------
# Intermediate tree


@dataclass(frozen=True)
class IRValue:
    kind: str  # "str" | "num"
    text: str

    @property
    def surface(self) -> str:
        return f"'{self.text}'" if self.kind == "str" else self.text


@dataclass(frozen=True)
class IRAggCol:
    column: str  # bare column name or "*"
    agg: str | None = None
    distinct: bool = False


@dataclass(frozen=True)
class IRSelect:
    kind = "select"
    items: tuple[IRAggCol, ...]
    tables: tuple[str, ...]  # verbalized table leaves (owners of the items)


@dataclass(frozen=True)
class IRCond:
    kind = "cond"
    target: IRAggCol
    op: str
    value: object  # IRValue | IRStatement | tuple[IRValue, IRValue]


@dataclass(frozen=True)
class IRBool:
    kind = "bool"
    op: str  # "and" | "or"
    items: tuple


@dataclass(frozen=True)
class IROrder:
    kind = "order"
    targets: tuple[tuple[IRAggCol, str], ...]  # (target, direction)
    limit: int | None = None


@dataclass(frozen=True)
class IRSuperlative:
    kind = "superlative"
    direction: str  # "most" | "least"
    target: IRAggCol


@dataclass(frozen=True)
class IRQuery:
    kind = "query"
    select: IRSelect
    filter: object | None = None  # IRCond | IRBool
    order: IROrder | None = None
    superlative: IRSuperlative | None = None
    # Reconstruction data for the FROM chain; never verbalized and never a
    # tree node, so the tree itself stays free of join structure.
    from_tables: tuple[str, ...] = ()
    join_conds: tuple[JoinCond, ...] = ()


@dataclass(frozen=True)
class IRStatement:
    kind = "statement"
    set_op: str | None
    queries: tuple[IRQuery, ...]


IRTree = IRStatement


def to_ir(q: SqlQuery, schema: DatabaseSchema) -> IRStatement:
    """Convert a resolved query into the intermediate tree (no JOIN/GROUP BY
    nodes; grouping is implied by aggregation)."""
    queries = [_query_to_ir(q, schema)]
    set_op = None
    if q.set_op is not None:
        set_op = q.set_op[0]
        if q.set_op[1].set_op is not None:
            raise UnsupportedConstructError("chained set operations are not supported")
        queries.append(_query_to_ir(q.set_op[1], schema))
    return IRStatement(set_op=set_op, queries=tuple(queries))


def _query_to_ir(q: SqlQuery, schema: DatabaseSchema) -> IRQuery:
    items = []
    tables = []
    for t in q.select:
        items.append(IRAggCol(column=t.column.column, agg=t.agg, distinct=t.distinct or (q.distinct and not t.agg)))
        owner = t.column.table
        if owner and owner not in tables:
            tables.append(owner)
    if not tables and q.tables:
        tables = [q.tables[0]]
    select = IRSelect(items=tuple(items), tables=tuple(tables))

    conjuncts = [_cond_to_ir(c, schema) for c in q.where] + [_cond_to_ir(c, schema) for c in q.having]
    filter_node = None
    if len(conjuncts) == 1:
        filter_node = conjuncts[0]
    elif conjuncts:
        filter_node = IRBool("and", tuple(conjuncts))

    order = None
    superlative = None
    if q.order_by:
        if q.limit == 1 and len(q.order_by) == 1:
            o = q.order_by[0]
            superlative = IRSuperlative(
                direction="most" if o.direction == "desc" else "least",
                target=_target_to_ir(o.target),
            )
        else:
            order = IROrder(
                targets=tuple((_target_to_ir(o.target), o.direction) for o in q.order_by),
                limit=q.limit,
            )
    elif q.limit is not None:
        raise UnsupportedConstructError("LIMIT without ORDER BY")

    return IRQuery(
        select=select,
        filter=filter_node,
        order=order,
        superlative=superlative,
        from_tables=q.tables,
        join_conds=q.joins,
    )


def _target_to_ir(t: AggTarget) -> IRAggCol:
    return IRAggCol(column=t.column.column, agg=t.agg, distinct=t.distinct)


def _cond_to_ir(node, schema: DatabaseSchema):
    if isinstance(node, BoolGroup):
        return IRBool(node.op, tuple(_cond_to_ir(i, schema) for i in node.items))
    pred: Predicate = node
    if pred.op == "between":
        value = (IRValue(pred.right[0].kind, pred.right[0].text), IRValue(pred.right[1].kind, pred.right[1].text))
    elif isinstance(pred.right, SqlQuery):
        value = to_ir(pred.right, schema)
    else:
        value = IRValue(pred.right.kind, pred.right.text)
    return IRCond(target=_target_to_ir(pred.left), op=pred.op, value=value)


def ir_to_sql(tree: IRStatement, schema: DatabaseSchema) -> SqlQuery:
    """Rebuild a SqlQuery from the tree. Grouping comes back as: group by all
    non-aggregated select columns whenever any aggregation is in play."""
    first = _ir_to_query(tree.queries[0], schema)
    if tree.set_op is not None:
        right = _ir_to_query(tree.queries[1], schema)
        first = replace(first, set_op=(tree.set_op, right))
    return first


def _ir_to_query(node: IRQuery, schema: DatabaseSchema) -> SqlQuery:
    tables = list(node.from_tables) or list(node.select.tables)

    def resolve(name: str) -> ColumnRef:
        if name == "*":
            return STAR
        for t in tables:
            table = schema.table(t)
            if table is not None and table.column(name) is not None:
                return ColumnRef(t, name)
        raise NameResolutionError(name, f"no table among {tables} has column {name!r}")

    def rebuild_target(item: IRAggCol) -> AggTarget:
        return AggTarget(resolve(item.column), agg=item.agg, distinct=item.distinct and item.agg is not None)

    select = []
    select_distinct = False
    for item in node.select.items:
        if item.distinct and item.agg is None:
            select_distinct = True
            select.append(AggTarget(resolve(item.column)))
        else:
            select.append(rebuild_target(item))

    where: list = []
    having: list = []
    for conjunct in _filter_conjuncts(node.filter):
        rebuilt = _rebuild_cond(conjunct, resolve, schema)
        if _cond_has_agg(conjunct):
            having.append(rebuilt)
        else:
            where.append(rebuilt)

    order_by: list[OrderItem] = []
    limit = None
    if node.superlative is not None:
        order_by.append(
            OrderItem(
                target=rebuild_target(node.superlative.target),
                direction="desc" if node.superlative.direction == "most" else "asc",
            )
        )
        limit = 1
    elif node.order is not None:
        order_by = [OrderItem(target=rebuild_target(t), direction=d) for t, d in node.order.targets]
        limit = node.order.limit

    group_by: list[ColumnRef] = []
    has_agg_select = any(t.agg for t in select)
    plain_select_cols = [t.column for t in select if t.agg is None and not t.column.is_star]
    order_has_agg = any(o.target.agg for o in order_by)
    if having or ((has_agg_select or order_has_agg) and plain_select_cols):
        if having and not plain_select_cols:
            raise UnsupportedConstructError("aggregated filter without a plain select column to group by")
        for col in plain_select_cols:
            if col not in group_by:
                group_by.append(col)

    return SqlQuery(
        select=tuple(select),
        tables=tuple(tables),
        joins=node.join_conds,
        where=tuple(where),
        group_by=tuple(group_by),
        having=tuple(having),
        order_by=tuple(order_by),
        limit=limit,
        distinct=select_distinct,
    )


def _filter_conjuncts(filter_node) -> tuple:
    if filter_node is None:
        return ()
    if isinstance(filter_node, IRBool) and filter_node.op == "and":
        return filter_node.items
    return (filter_node,)


def _cond_has_agg(node) -> bool:
    if isinstance(node, IRBool):
        flags = [_cond_has_agg(i) for i in node.items]
        if all(flags):
            return True
        if any(flags):
            raise UnsupportedConstructError("boolean group mixes aggregated and plain conditions")
        return False
    return node.target.agg is not None


def _rebuild_cond(node, resolve, schema: DatabaseSchema):
    if isinstance(node, IRBool):
        return BoolGroup(node.op, tuple(_rebuild_cond(i, resolve, schema) for i in node.items))
    cond: IRCond = node
    target = AggTarget(resolve(cond.target.column), agg=cond.target.agg, distinct=cond.target.distinct)
    if cond.op == "between":
        right = (Value(cond.value[0].kind, cond.value[0].text), Value(cond.value[1].kind, cond.value[1].text))
    elif isinstance(cond.value, IRStatement):
        right = ir_to_sql(cond.value, schema)
    else:
        right = Value(cond.value.kind, cond.value.text)
    return Predicate(target, cond.op, right)


def walk_nodes(node):
    """Yield every tree node (not reconstruction data) depth-first."""
    yield node
    if isinstance(node, IRStatement):
        for q in node.queries:
            yield from walk_nodes(q)
    elif isinstance(node, IRQuery):
        yield from walk_nodes(node.select)
        if node.filter is not None:
            yield from walk_nodes(node.filter)
        if node.order is not None:
            yield node.order
        if node.superlative is not None:
            yield node.superlative
    elif isinstance(node, IRBool):
        for item in node.items:
            yield from walk_nodes(item)
    elif isinstance(node, IRCond):
        if isinstance(node.value, IRStatement):
            yield from walk_nodes(node.value)
