"""Rewriting the user question from answered multi-choice questions.

Plain substitution breaks down when the clarified token is a verb or an
adjective, so each edit is picked by (POS class, option kind, context). The
built-in rule table can be replaced from a JSON file; rules are tried in
order and the first match wins. Edits are applied right to left so earlier
token indices stay valid.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import ConfigError
from .question_gen import (
    KIND_AGGREGATION,
    KIND_COLUMN,
    KIND_NONE,
    KIND_TABLE,
    KIND_VALUE,
    CandidateOption,
)
from .text import STOP_WORDS, is_number_token, strip_quotes

POS_NOUN = "noun"
POS_VERB = "verb"
POS_ADJECTIVE = "adjective"
POS_NUMBER = "number"
POS_OTHER = "other"

AGG_PHRASES = {
    "min": "minimum",
    "max": "maximum",
    "sum": "total",
    "avg": "average",
    "count": "number of",
}

_LEXICON = {
    POS_ADJECTIVE: {
        "aged", "old", "young", "new", "big", "small", "large", "little", "good",
        "bad", "cheap", "expensive", "heavy", "light", "fast", "slow", "long",
        "short", "tall", "high", "low", "many", "few", "popular", "famous",
        "common", "rare", "different", "distinct", "available",
    },
    POS_VERB: {
        "is", "are", "was", "were", "be", "have", "has", "had", "do", "does",
        "did", "live", "lives", "work", "works", "study", "studies", "play",
        "plays", "own", "owns", "earn", "earns", "cost", "costs", "weigh",
        "weighs", "hold", "holds", "sell", "sells", "buy", "buys", "fly",
        "flies", "depart", "departs", "arrive", "arrives", "run", "runs",
        "teach", "teaches", "visit", "visits", "attend", "attends",
    },
    POS_NOUN: set(),
}

_ADJ_SUFFIXES = ("ous", "ful", "ive", "ic", "al", "able", "ible", "less", "est", "ish")
_NOUN_SUFFIXES = ("tion", "sion", "ment", "ness", "ity", "ship", "ance", "ence", "er", "or", "ist")


@dataclass(frozen=True)
class PosTaggedUtterance:
    text: str
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    spans: tuple[tuple[int, int], ...]  # character spans of tokens in text

    def __post_init__(self):
        if not (len(self.tokens) == len(self.tags) == len(self.spans)):
            raise ValueError("tokens, tags, and spans must align one to one")


def pos_tag(utterance: str | list[str], overrides: dict[int, str] | None = None) -> PosTaggedUtterance:
    """Coarse POS classes from a lexicon plus suffix heuristics; unknown words
    default to noun. Caller-supplied tags win. Accepts raw text or a token
    list (joined with single spaces)."""
    from .text import tokenize_spans

    if isinstance(utterance, str):
        text = utterance
        spanned = tokenize_spans(utterance)
    else:
        text = " ".join(utterance)
        spanned = []
        pos = 0
        for token in utterance:
            spanned.append((token, pos, pos + len(token)))
            pos += len(token) + 1
    tags = []
    for i, (token, _, _) in enumerate(spanned):
        if overrides and i in overrides:
            tags.append(overrides[i])
        else:
            tags.append(_tag_word(token))
    return PosTaggedUtterance(
        text=text,
        tokens=tuple(t for t, _, _ in spanned),
        tags=tuple(tags),
        spans=tuple((s, e) for _, s, e in spanned),
    )


def _tag_word(token: str) -> str:
    word = strip_quotes(token).lower()
    if not word:
        return POS_OTHER
    if is_number_token(word):
        return POS_NUMBER
    if not re.search(r"[a-z]", word):
        return POS_OTHER
    if word in _LEXICON[POS_ADJECTIVE]:
        return POS_ADJECTIVE
    if word in _LEXICON[POS_VERB]:
        return POS_VERB
    if word.endswith("ly"):
        return POS_OTHER
    if word.endswith(("ing", "ed")) and len(word) > 4:
        return POS_VERB
    if word.endswith(_ADJ_SUFFIXES) and len(word) > 4:
        return POS_ADJECTIVE
    if word.endswith(_NOUN_SUFFIXES) and len(word) > 4:
        return POS_NOUN
    return POS_NOUN


@dataclass(frozen=True)
class Edit:
    token_index: int
    rule_id: str
    replacement: str


@dataclass(frozen=True)
class ModifiedUtterance:
    text: str
    tokens: tuple[str, ...]
    edits: tuple[Edit, ...]


@dataclass(frozen=True)
class ModifierRule:
    rule_id: str
    pos: tuple[str, ...]  # matching POS classes, or ("any",)
    kind: str  # option kind
    context: str  # "value_follows" | "otherwise" | "any"
    template: str  # slots: {token} {column} {table} {agg_phrase} {quoted}


DEFAULT_RULES: tuple[ModifierRule, ...] = (
    ModifierRule("value_quote", ("any",), KIND_VALUE, "any", "{quoted}"),
    ModifierRule("adj_verb_column_filter", (POS_ADJECTIVE, POS_VERB), KIND_COLUMN, "value_follows", "whose {column} is"),
    ModifierRule("adj_verb_column_with", (POS_ADJECTIVE, POS_VERB), KIND_COLUMN, "otherwise", "with {column}"),
    ModifierRule("noun_column", ("any",), KIND_COLUMN, "any", "{column}"),
    ModifierRule("noun_table", ("any",), KIND_TABLE, "any", "{table}"),
    ModifierRule("aggregation_phrase", ("any",), KIND_AGGREGATION, "any", "{agg_phrase}"),
)


def load_rules(path: str) -> tuple[ModifierRule, ...]:
    """Load a rule table from JSON: a list of {id, pos, kind, context,
    replacement} objects, tried in file order."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ConfigError(f"rule file {path} must hold a JSON list")
    rules = []
    for i, entry in enumerate(raw):
        try:
            pos = entry.get("pos", "any")
            rules.append(
                ModifierRule(
                    rule_id=entry.get("id", f"rule_{i}"),
                    pos=tuple(pos) if isinstance(pos, list) else (pos,),
                    kind=entry["kind"],
                    context=entry.get("context", "any"),
                    template=entry["replacement"],
                )
            )
        except KeyError as exc:
            raise ConfigError(f"rule {i} in {path} is missing {exc}") from exc
    return tuple(rules)


def _value_follows(tokens: tuple[str, ...], index: int) -> bool:
    """True when the next non-stop-word token looks like a value (number or
    quoted span)."""
    for tok in tokens[index + 1 :]:
        word = tok.lower()
        if word in STOP_WORDS:
            continue
        return is_number_token(word) or (len(tok) >= 2 and tok[0] in "'\"" and tok[-1] == tok[0])
    return False


def _already_quoted(token: str) -> bool:
    return len(token) >= 2 and token[0] == token[-1] and token[0] in "'\""


def _pick_rule(rules, pos: str, kind: str, tokens, index: int) -> ModifierRule | None:
    for rule in rules:
        if rule.kind != kind:
            continue
        if "any" not in rule.pos and pos not in rule.pos:
            continue
        if rule.context == "value_follows" and not _value_follows(tokens, index):
            continue
        if rule.context == "otherwise" and _value_follows(tokens, index):
            continue
        return rule
    return None


def apply_answers(
    utterance: PosTaggedUtterance,
    answers: list[tuple[int, CandidateOption]],
    rules: tuple[ModifierRule, ...] = DEFAULT_RULES,
) -> ModifiedUtterance:
    """Rewrite the question. Each answer addresses one token; None answers
    leave it untouched, Value answers quote it, schema answers substitute a
    rule-dependent span. Edits splice into the original text right to left,
    so an all-None answer set returns it byte-identical. A replacement that
    would reproduce the token verbatim is qualified with its table (columns)
    or dropped (tables, aggregations): re-stating the same word would not
    help the parser."""
    seen: set[int] = set()
    for index, _ in answers:
        if not 0 <= index < len(utterance.tokens):
            raise ConfigError(f"answer token index {index} out of range")
        if index in seen:
            raise ConfigError(f"overlapping edits for token index {index}")
        seen.add(index)

    text = utterance.text
    tokens = list(utterance.tokens)
    edits: list[Edit] = []
    for index, option in sorted(answers, key=lambda item: -item[0]):
        if option.kind == KIND_NONE:
            continue
        token = utterance.tokens[index]
        start, end = utterance.spans[index]
        pos = utterance.tags[index]
        if option.kind == KIND_VALUE:
            if _already_quoted(token):
                continue
            replacement = f"'{text[start:end]}'"
            rule_id = "value_quote"
        else:
            rule = _pick_rule(rules, pos, option.kind, utterance.tokens, index)
            if rule is None:
                continue
            replacement = _fill(rule.template, token, option)
            rule_id = rule.rule_id
            if replacement == token:
                if option.kind == KIND_COLUMN and option.source_ref and len(option.source_ref) == 2:
                    replacement = f"{option.source_ref[0]} {option.source_ref[1]}"
                    rule_id = "column_table_qualified"
                else:
                    continue
        text = text[:start] + replacement + text[end:]
        tokens[index] = replacement
        edits.append(Edit(index, rule_id, replacement))

    return ModifiedUtterance(
        text=text,
        tokens=tuple(tokens),
        edits=tuple(reversed(edits)),
    )


def _fill(template: str, token: str, option: CandidateOption) -> str:
    ref = option.source_ref or ()
    column = ref[1] if len(ref) >= 2 else option.surface.replace(" ", "_")
    table = ref[0] if ref else option.surface.replace(" ", "_")
    agg_phrase = AGG_PHRASES.get(ref[0] if ref else option.surface, option.surface)
    return (
        template.replace("{quoted}", f"'{token}'")
        .replace("{token}", token)
        .replace("{column}", column)
        .replace("{table}", table)
        .replace("{agg_phrase}", agg_phrase)
    )
