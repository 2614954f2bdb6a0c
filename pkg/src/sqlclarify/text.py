"""Tokenization, rule-based lemmatization, and the built-in stop-word list.

Shared by the aligner, question generator, and question modifier. Everything
here is deterministic and dependency-free on purpose: the package must behave
identically across runs and machines.
"""

from __future__ import annotations

import re

_QUOTED = re.compile(r"'[^']*'|\"[^\"]*\"")
_WORD = re.compile(r"[A-Za-z0-9_]+(?:\.[A-Za-z0-9_]+)*|[^\sA-Za-z0-9_]")

# Words a user question can contain that carry no database meaning: articles,
# prepositions, auxiliaries, WH-words, pronouns, punctuation, and the generic
# query verbs questions open with ("find", "show", ...). Tokens on this list
# are never reported as misunderstood.
STOP_WORDS = frozenset(
    """
    a an the
    of in on at by for from to into onto over under about as per during with
    is are was were be been being am do does did done have has had
    can could will would shall should may might must
    what which who whom whose where when why how
    i you he she it we they me him her us them my your his its our their
    this that these those there here
    and or but nor if then else than so such
    no not none only also just too very more own same other
    all each every some any
    most least less greater smaller fewer higher lower bigger larger older younger
    sorted ascending descending first limited
    find show list give tell display return get fetch retrieve select
    please want need know see look
    everything anything something nothing
    . , ; : ! ? ' " ` ( ) [ ] { } - _ /
    """.split()
)


def load_stop_words(path: str) -> frozenset[str]:
    """Read an override stop-word file: one lowercased word per line, # comments."""
    words = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip().lower()
            if word and not word.startswith("#"):
                words.append(word)
    return frozenset(words)


def tokenize(text: str) -> list[str]:
    """Split a question into lowercased tokens.

    Single- or double-quoted spans survive as one token, quotes included, with
    the inner text left verbatim; everything else is lowercased and split on
    whitespace and punctuation. Underscored identifiers stay whole.
    """
    return [t for t, _, _ in tokenize_spans(text)]


def tokenize_spans(text: str) -> list[tuple[str, int, int]]:
    """Like tokenize, but each token carries its (start, end) character span
    in the original string, so edits can splice without disturbing the rest."""
    out: list[tuple[str, int, int]] = []
    pos = 0
    for match in _QUOTED.finditer(text):
        _plain_tokens(text, pos, match.start(), out)
        inner = match.group(0)[1:-1]
        out.append((f"'{inner}'", match.start(), match.end()))
        pos = match.end()
    _plain_tokens(text, pos, len(text), out)
    return out


def _plain_tokens(text: str, start: int, end: int, out: list[tuple[str, int, int]]):
    for match in _WORD.finditer(text, start, end):
        out.append((match.group(0).lower(), match.start(), match.end()))


def strip_quotes(token: str) -> str:
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "'\"":
        return token[1:-1]
    return token


_IRREGULAR = {
    "children": "child",
    "men": "man",
    "women": "woman",
    "people": "person",
    "mice": "mouse",
    "feet": "foot",
    "teeth": "tooth",
    "geese": "goose",
    "wives": "wife",
    "lives": "life",
    "leaves": "leaf",
    "knives": "knife",
    "better": "good",
    "best": "good",
    "worse": "bad",
    "worst": "bad",
    "went": "go",
    "gone": "go",
    "bought": "buy",
    "sold": "sell",
    "paid": "pay",
    "made": "make",
    "spent": "spend",
    "took": "take",
    "taken": "take",
    "given": "give",
    "gave": "give",
    "held": "hold",
    "born": "bear",
}

_VOWELS = set("aeiou")

_NUMERIC = re.compile(r"^-?\d+(\.\d+)?$")


def is_number_token(token: str) -> bool:
    return bool(_NUMERIC.match(token))


def lemmatize(word: str) -> str:
    """Reduce a word to a base form with suffix rules plus an irregular lexicon.

    Handles plural -s/-es/-ies, -ed (with e-restoration and de-doubling),
    -ing, and -est. Intentionally coarse: callers only need lexical overlap,
    not linguistic precision.
    """
    w = strip_quotes(word.lower())
    if not w or is_number_token(w):
        return w
    if w in _IRREGULAR:
        return _IRREGULAR[w]
    n = len(w)
    if w.endswith("ies") and n > 4:
        return w[:-3] + "y"
    if w.endswith("ied") and n > 4:
        return w[:-3] + "y"
    if w.endswith("sses") or w.endswith("xes") or w.endswith("zes") or w.endswith("ches") or w.endswith("shes"):
        return w[:-2]
    if w.endswith("ss"):
        return w
    if w.endswith("s") and not w.endswith("us") and not w.endswith("is") and n > 3:
        return w[:-1]
    if w.endswith("eed") and n > 4:
        return w[:-1]  # agreed -> agree
    if w.endswith("ed") and n > 3:
        return _restore(w[:-2])  # aged -> age, stopped -> stop, walked -> walk
    if w.endswith("ing") and n > 5:
        return _restore(w[:-3])
    if w.endswith("est") and n > 5:
        return _dedouble(w[:-3])
    return w


def _dedouble(stem: str) -> str:
    if len(stem) >= 2 and stem[-1] == stem[-2] and stem[-1] not in _VOWELS and stem[-1] != "s":
        return stem[:-1]
    return stem


# consonants that usually end verbs whose base form carries a final "e"
_E_FINAL = set("cgsuvz")


def _restore(stem: str) -> str:
    if len(stem) >= 2 and stem[-1] == stem[-2]:
        return _dedouble(stem)
    if stem and stem[-1] in _E_FINAL and not stem.endswith("ss"):
        return stem + "e"
    return stem


def lemma_tokens(span: str) -> list[str]:
    """Lemmatized word list of a span; underscores and spaces both separate."""
    return [lemmatize(part) for part in re.split(r"[\s_]+", strip_quotes(span.strip())) if part]
