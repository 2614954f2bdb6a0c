"""Template-based restatement of an intermediate tree as a question.

Every emitted token carries its origin (template, column, table, value, or
aggregation) so the aligner can mask template filler and the trainer can
perturb content. Rendering is deterministic: one fixed fragment per rule,
first fragment wins when a rule carries alternatives.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import TemplateError
from .schema_store import DatabaseSchema
from .sql_ir import (
    IRAggCol,
    IRBool,
    IRCond,
    IROrder,
    IRQuery,
    IRSelect,
    IRStatement,
    IRSuperlative,
)

ORIGIN_TEMPLATE = "template"
ORIGIN_COLUMN = "column"
ORIGIN_TABLE = "table"
ORIGIN_VALUE = "value"
ORIGIN_AGG = "aggregation"


@dataclass(frozen=True)
class RestToken:
    surface: str
    origin: str


@dataclass(frozen=True)
class RestatedUtterance:
    text: str
    tokens: tuple[RestToken, ...]

    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


DEFAULT_TEMPLATES: dict[str, str] = {
    "select": "find {items}",
    "nested_select": "{items}",
    "select_table": "of {table}",
    "item_plain": "the {column}",
    "item_agg": "the {agg} {column}",
    "item_count_star": "the {agg} rows",
    "item_star": "everything",
    "item_distinct": "the distinct {column}",
    "item_sep": "and",
    "cond": "whose {target} is {op} {value}",
    "cond_between": "whose {target} is between {low} and {high}",
    "op_eq": "",
    "op_ne": "not",
    "op_gt": "greater than",
    "op_lt": "less than",
    "op_ge": "at least",
    "op_le": "at most",
    "op_like": "like",
    "op_not_like": "not like",
    "op_in": "among",
    "op_not_in": "not among",
    "bool_and": "and",
    "bool_or": "or",
    "order_asc": "sorted by {target} in ascending order",
    "order_desc": "sorted by {target} in descending order",
    "order_limit": "limited to first {k}",
    "superlative_most": "with the most {target}",
    "superlative_least": "with the least {target}",
    "set_intersect": "intersected with",
    "set_union": "combined with",
    "set_except": "excluding",
    "nested": "that",
    "agg_min": "minimum",
    "agg_max": "maximum",
    "agg_sum": "total",
    "agg_avg": "average",
    "agg_count": "number of",
}

_OP_KEY = {
    "=": "op_eq",
    "!=": "op_ne",
    ">": "op_gt",
    "<": "op_lt",
    ">=": "op_ge",
    "<=": "op_le",
    "like": "op_like",
    "not like": "op_not_like",
    "in": "op_in",
    "not in": "op_not_in",
}

_SLOT = re.compile(r"\{[a-z_]+\}")

TemplateTable = dict


def load_templates(path: str) -> dict[str, str]:
    """Read a template override file (JSON object of rule -> fragment) and
    layer it over the built-in defaults."""
    with open(path, encoding="utf-8") as fh:
        overrides = json.load(fh)
    if not isinstance(overrides, dict):
        raise TemplateError(f"template file {path} must hold a JSON object")
    merged = dict(DEFAULT_TEMPLATES)
    for key, value in overrides.items():
        if isinstance(value, list):  # alternatives: first one wins
            value = value[0]
        if not isinstance(value, str):
            raise TemplateError(f"template {key!r} must be a string")
        merged[key] = value
    return merged


def template_vocabulary(templates: dict[str, str] | None = None) -> set[str]:
    """Every template-origin word a restatement can emit. Aggregation phrases
    are excluded: they render as content, not filler."""
    table = DEFAULT_TEMPLATES if templates is None else templates
    words: set[str] = set()
    for key, fragment in table.items():
        if key.startswith("agg_"):
            continue
        words.update(w for w in _SLOT.sub(" ", fragment).split() if w)
    return words


class _Renderer:
    def __init__(self, templates: dict[str, str]):
        self.templates = templates
        self.tokens: list[RestToken] = []

    def fragment(self, key: str) -> str:
        try:
            return self.templates[key]
        except KeyError:
            raise TemplateError(f"no template for rule {key!r}") from None

    def emit_template(self, words: str):
        for w in words.split():
            self.tokens.append(RestToken(w, ORIGIN_TEMPLATE))

    def emit(self, surface: str, origin: str):
        self.tokens.append(RestToken(surface, origin))

    def fill(self, key: str, slots: dict):
        """Emit a fragment left to right; slot values are emitter callbacks."""
        fragment = self.fragment(key)
        pos = 0
        for match in _SLOT.finditer(fragment):
            self.emit_template(fragment[pos : match.start()])
            name = match.group(0)[1:-1]
            if name not in slots:
                raise TemplateError(f"template {key!r} uses unknown slot {{{name}}}")
            slots[name]()
            pos = match.end()
        self.emit_template(fragment[pos:])

    # --- node renderers ---

    def statement(self, node: IRStatement, nested: bool = False):
        self.query(node.queries[0], nested=nested)
        if node.set_op is not None:
            self.emit_template(self.fragment(f"set_{node.set_op}"))
            self.query(node.queries[1], nested=True)

    def query(self, node: IRQuery, nested: bool = False):
        self.select(node.select, nested=nested)
        if node.filter is not None:
            self.filter(node.filter)
        if node.superlative is not None:
            self.superlative(node.superlative)
        if node.order is not None:
            self.order(node.order)

    def select(self, node: IRSelect, nested: bool = False):
        def items():
            for i, item in enumerate(node.items):
                if i:
                    self.emit_template(self.fragment("item_sep"))
                self.item(item)

        self.fill("nested_select" if nested else "select", {"items": items})
        for table in node.tables:
            self.fill("select_table", {"table": lambda t=table: self.emit(t, ORIGIN_TABLE)})

    def item(self, item: IRAggCol):
        if item.agg == "count" and item.column == "*":
            self.fill("item_count_star", {"agg": lambda: self.agg_words("count")})
        elif item.column == "*":
            self.fill("item_star", {})
        elif item.agg:
            self.fill(
                "item_agg",
                {
                    "agg": lambda: self.agg_words(item.agg),
                    "column": lambda: self.emit(item.column, ORIGIN_COLUMN),
                },
            )
        elif item.distinct:
            self.fill("item_distinct", {"column": lambda: self.emit(item.column, ORIGIN_COLUMN)})
        else:
            self.fill("item_plain", {"column": lambda: self.emit(item.column, ORIGIN_COLUMN)})

    def agg_words(self, agg: str):
        for w in self.fragment(f"agg_{agg}").split():
            self.emit(w, ORIGIN_AGG)

    def target_words(self, target: IRAggCol):
        if target.agg == "count" and target.column == "*":
            self.agg_words("count")
            self.emit_template("rows")
            return
        if target.agg:
            self.agg_words(target.agg)
        if target.column != "*":
            self.emit(target.column, ORIGIN_COLUMN)

    def filter(self, node):
        if isinstance(node, IRBool):
            for i, item in enumerate(node.items):
                if i:
                    self.emit_template(self.fragment(f"bool_{node.op}"))
                self.filter(item)
            return
        cond: IRCond = node
        if cond.op == "between":
            low, high = cond.value
            self.fill(
                "cond_between",
                {
                    "target": lambda: self.target_words(cond.target),
                    "low": lambda: self.emit(low.surface, ORIGIN_VALUE),
                    "high": lambda: self.emit(high.surface, ORIGIN_VALUE),
                },
            )
            return
        op_key = _OP_KEY.get(cond.op)
        if op_key is None:
            raise TemplateError(f"no template for operator {cond.op!r}")

        def value():
            if isinstance(cond.value, IRStatement):
                self.emit_template(self.fragment("nested"))
                self.statement(cond.value, nested=True)
            else:
                self.emit(cond.value.surface, ORIGIN_VALUE)

        self.fill(
            "cond",
            {
                "target": lambda: self.target_words(cond.target),
                "op": lambda: self.emit_template(self.fragment(op_key)),
                "value": value,
            },
        )

    def superlative(self, node: IRSuperlative):
        self.fill(
            f"superlative_{node.direction}",
            {"target": lambda: self.target_words(node.target)},
        )

    def order(self, node: IROrder):
        for i, (target, direction) in enumerate(node.targets):
            if i:
                self.emit_template(self.fragment("item_sep"))
            self.fill(
                "order_asc" if direction == "asc" else "order_desc",
                {"target": lambda t=target: self.target_words(t)},
            )
        if node.limit is not None:
            self.fill("order_limit", {"k": lambda: self.emit(str(node.limit), ORIGIN_VALUE)})


def restate(
    tree: IRStatement,
    schema: DatabaseSchema,
    templates: dict[str, str] | None = None,
) -> RestatedUtterance:
    """Render the tree as a natural-language question with provenance tags."""
    renderer = _Renderer(DEFAULT_TEMPLATES if templates is None else templates)
    renderer.statement(tree)
    tokens = tuple(renderer.tokens)
    return RestatedUtterance(text=" ".join(t.surface for t in tokens), tokens=tokens)


def tree_leaves(tree: IRStatement) -> list[tuple[str, str]]:
    """(origin, surface) pairs for every column/table/value leaf, in render
    order. Mirrors what restate() verbalizes; the provenance invariant checks
    restatement tokens against exactly this list."""
    leaves: list[tuple[str, str]] = []

    def target(t: IRAggCol):
        if t.column != "*":
            leaves.append((ORIGIN_COLUMN, t.column))

    def statement(node: IRStatement):
        for q in node.queries:
            query(q)

    def query(node: IRQuery):
        for item in node.select.items:
            target(item)
        for table in node.select.tables:
            leaves.append((ORIGIN_TABLE, table))
        if node.filter is not None:
            cond(node.filter)
        if node.superlative is not None:
            target(node.superlative.target)
        if node.order is not None:
            for t, _ in node.order.targets:
                target(t)
            if node.order.limit is not None:
                leaves.append((ORIGIN_VALUE, str(node.order.limit)))

    def cond(node):
        if isinstance(node, IRBool):
            for item in node.items:
                cond(item)
            return
        target(node.target)
        if node.op == "between":
            leaves.append((ORIGIN_VALUE, node.value[0].surface))
            leaves.append((ORIGIN_VALUE, node.value[1].surface))
        elif isinstance(node.value, IRStatement):
            statement(node.value)
        else:
            leaves.append((ORIGIN_VALUE, node.value.surface))

    statement(tree)
    return leaves
