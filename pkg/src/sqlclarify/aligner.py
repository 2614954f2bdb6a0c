"""Token alignment between a question and the restated prediction.

Pipeline: cosine similarity matrix over encoded tokens, masking of stop
words (question side) and template filler (restatement side), an ambiguity
penalty dividing a token's scores by its schema occurrence count, maximum
weight one-to-one matching, then thresholding. Question tokens that end up
unmatched or below the threshold are the ones the parser likely
mistranslated or dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import cosine_matrix
from .restater import ORIGIN_TEMPLATE, RestatedUtterance
from .schema_store import DatabaseSchema, occurrence_count
from .text import STOP_WORDS, lemmatize, strip_quotes


@dataclass
class SimilarityMatrix:
    entries: np.ndarray  # N x M
    row_tokens: tuple[str, ...]
    col_tokens: tuple[str, ...]
    col_origins: tuple[str, ...] = ()
    exempt_rows: frozenset[int] = frozenset()
    excluded_cols: frozenset[int] = frozenset()

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.entries.shape != (len(self.row_tokens), len(self.col_tokens)):
            raise ValueError("similarity matrix shape does not match token labels")


@dataclass(frozen=True)
class AlignmentResult:
    matching: dict[int, int]  # row index -> column index, one-to-one
    scores: tuple[float, ...]  # per row: matched entry, 0 when unmatched
    uncertain: tuple[int, ...]  # non-exempt rows scoring below the threshold
    threshold: float
    row_tokens: tuple[str, ...]
    col_tokens: tuple[str, ...]
    exempt_rows: frozenset[int] = frozenset()

    def uncertain_tokens(self) -> list[str]:
        return [self.row_tokens[i] for i in self.uncertain]


def similarity_matrix(h: np.ndarray, u: np.ndarray, row_tokens, col_tokens) -> SimilarityMatrix:
    """Cosine of every (question token, restatement token) vector pair."""
    if h.shape[0] != u.shape[0]:
        raise ValueError(f"encoder dimensions differ: {h.shape[0]} vs {u.shape[0]}")
    return SimilarityMatrix(
        entries=cosine_matrix(h, u),
        row_tokens=tuple(row_tokens),
        col_tokens=tuple(col_tokens),
    )


def mask_and_postprocess(
    sim: SimilarityMatrix,
    restated: RestatedUtterance,
    schema: DatabaseSchema,
    stop_words: frozenset[str] = STOP_WORDS,
) -> SimilarityMatrix:
    """Apply masking and the ambiguity penalty.

    Question rows that are stop words become exempt (they never count as
    misunderstood and do not participate in matching). Restatement columns
    whose origin is template filler, or whose word is a stop word, are
    excluded from matching. Rows whose token occurs in more than one schema
    name have every entry divided by that count, so ambiguous mentions sink
    below the threshold.
    """
    exempt = frozenset(
        i for i, tok in enumerate(sim.row_tokens) if strip_quotes(tok) in stop_words or not tok.strip()
    )
    excluded = []
    origins = tuple(t.origin for t in restated.tokens)
    if len(origins) != len(sim.col_tokens):
        raise ValueError("restatement token count does not match matrix columns")
    for j, tok in enumerate(sim.col_tokens):
        word = strip_quotes(tok)
        if origins[j] == ORIGIN_TEMPLATE or word in stop_words:
            excluded.append(j)

    entries = sim.entries.copy()
    for i, tok in enumerate(sim.row_tokens):
        if i in exempt:
            continue
        word = strip_quotes(tok)
        count = max(occurrence_count(schema, word), occurrence_count(schema, lemmatize(word)))
        if count > 1:
            entries[i, :] = entries[i, :] / count
    return SimilarityMatrix(
        entries=entries,
        row_tokens=sim.row_tokens,
        col_tokens=sim.col_tokens,
        col_origins=origins,
        exempt_rows=exempt,
        excluded_cols=frozenset(excluded),
    )


# ---------------------------------------------------------------------------
# Maximum-weight one-to-one matching


def _solve_max_square(weights: list[list[float]]) -> list[int]:
    """Jonker-style O(n^3) assignment maximizing total weight on a square
    matrix; returns col assigned to each row."""
    n = len(weights)
    cost = [[-weights[i][j] for j in range(n)] for i in range(n)]
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    match = [0] * (n + 1)  # 1-based: match[j] = row assigned to column j
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    row_to_col = [0] * n
    for j in range(1, n + 1):
        if match[j]:
            row_to_col[match[j] - 1] = j - 1
    return row_to_col


def _best_total(matrix: np.ndarray) -> float:
    """Optimal total weight of a maximum-cardinality assignment."""
    n, m = matrix.shape
    if n == 0 or m == 0:
        return 0.0
    size = max(n, m)
    padded = [[0.0] * size for _ in range(size)]
    for i in range(n):
        for j in range(m):
            padded[i][j] = float(matrix[i, j])
    assignment = _solve_max_square(padded)
    return sum(float(matrix[i, assignment[i]]) for i in range(n) if assignment[i] < m)


def hungarian_match(sim: SimilarityMatrix) -> dict[int, int]:
    """Maximum-weight one-to-one matching over eligible rows and columns.

    min(N, M) pairs are always formed; excess rows or columns stay
    unmatched. Ties between equally heavy matchings break toward the
    lexicographically smallest (row, column) assignment: rows are fixed in
    order, each to the smallest column that still permits an optimal
    completion.
    """
    rows = [i for i in range(len(sim.row_tokens)) if i not in sim.exempt_rows]
    cols = [j for j in range(len(sim.col_tokens)) if j not in sim.excluded_cols]
    if not rows or not cols:
        return {}
    sub = sim.entries[np.ix_(rows, cols)]
    tol = 1e-9
    n, m = sub.shape
    budget = _best_total(sub)
    fixed: dict[int, int] = {}
    free_rows = list(range(n))
    free_cols = list(range(m))
    for r in range(n):
        if not free_cols:
            break
        rest_rows = [i for i in free_rows if i != r]
        chosen = None
        for c in free_cols:
            rest_cols = [j for j in free_cols if j != c]
            rest = _best_total(sub[np.ix_(rest_rows, rest_cols)]) if rest_rows and rest_cols else 0.0
            if abs(float(sub[r, c]) + rest - budget) <= tol:
                chosen = c
                break
        if chosen is None:
            if len(free_rows) > len(free_cols):
                # row r is one of the excess rows in every optimal matching
                free_rows.remove(r)
                budget_check = _best_total(sub[np.ix_(rest_rows, free_cols)]) if rest_rows else 0.0
                budget = budget_check
                continue
            chosen = free_cols[int(np.argmax(sub[r, free_cols]))]  # numerical fallback
        fixed[r] = chosen
        free_rows.remove(r)
        free_cols.remove(chosen)
        budget -= float(sub[r, chosen])

    return {rows[r]: cols[c] for r, c in fixed.items()}


def locate_uncertain(
    sim_masked: SimilarityMatrix,
    threshold: float,
) -> AlignmentResult:
    """Match and extract uncertain rows: non-exempt question tokens whose
    matched score (0 when unmatched) falls below the threshold."""
    matching = hungarian_match(sim_masked)
    scores = []
    for i in range(len(sim_masked.row_tokens)):
        j = matching.get(i)
        scores.append(float(sim_masked.entries[i, j]) if j is not None else 0.0)
    uncertain = tuple(
        i
        for i in range(len(sim_masked.row_tokens))
        if i not in sim_masked.exempt_rows and scores[i] < threshold
    )
    return AlignmentResult(
        matching=matching,
        scores=tuple(scores),
        uncertain=uncertain,
        threshold=threshold,
        row_tokens=sim_masked.row_tokens,
        col_tokens=sim_masked.col_tokens,
        exempt_rows=sim_masked.exempt_rows,
    )


def matrix_dump(sim: SimilarityMatrix) -> str:
    """Tab-separated grid with row/column labels for eyeballing alignments."""
    lines = ["\t" + "\t".join(sim.col_tokens)]
    for i, tok in enumerate(sim.row_tokens):
        cells = "\t".join(f"{sim.entries[i, j]:.3f}" for j in range(len(sim.col_tokens)))
        lines.append(f"{tok}\t{cells}")
    return "\n".join(lines)
