"""Token encoding and weakly supervised training of the projection layer.

Tokens are embedded with a static table (GloVe-format file, or a seeded
synthetic table for self-contained runs), projected through one trainable
tanh layer, and compared by cosine. Training needs no alignment labels: each
question is pushed toward the restatement of its gold SQL and away from
sampled negatives via a hinge loss with an L1 sparsity term on the
similarity matrices. The similarity threshold separating understood from
misunderstood tokens falls out of the same triples as the mean pair score.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingError
from .restater import ORIGIN_COLUMN, ORIGIN_VALUE, RestatedUtterance, RestToken, restate
from .schema_store import DatabaseSchema, Example
from .text import lemmatize, strip_quotes, tokenize

# ---------------------------------------------------------------------------
# Embeddings


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray]
    unk: np.ndarray

    def __post_init__(self):
        if self.unk.shape != (self.dim,):
            raise ConfigError(f"unknown-word vector must have dimension {self.dim}")
        for word, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise ConfigError(f"vector for {word!r} has dimension {vec.shape}, expected {self.dim}")

    def lookup(self, token: str) -> np.ndarray:
        """Vector for a token. Quoted spans are unquoted first; compounds
        ("pet_age", multi-word values) average their known parts."""
        word = strip_quotes(token).lower()
        hit = self.vectors.get(word)
        if hit is not None:
            return hit
        parts = [p for p in word.replace("_", " ").split() if p]
        if len(parts) > 1:
            return np.mean([self.vectors.get(p, self.unk) for p in parts], axis=0)
        return self.unk

    def span_vector(self, span: str) -> np.ndarray:
        """Average embedding over the tokens of a span."""
        parts = [p for p in strip_quotes(span).lower().replace("_", " ").split() if p]
        if not parts:
            return self.unk
        return np.mean([self.vectors.get(p, self.unk) for p in parts], axis=0)

    def matrix(self, tokens: list[str]) -> np.ndarray:
        """Raw embedding matrix, one column per token (d x N)."""
        if not tokens:
            raise ConfigError("cannot embed an empty token list")
        return np.column_stack([self.lookup(t) for t in tokens]).astype(np.float64)


def load_embedding_file(path: str, unk: str = "mean") -> EmbeddingTable:
    """Read a GloVe-layout text file: word followed by d floats per line.

    unk: "mean" (default) uses the mean of all vectors for unknown words,
    "zero" uses the zero vector.
    """
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            word, values = parts[0], parts[1:]
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad float in embedding line") from exc
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ConfigError(f"{path}:{lineno}: dimension {len(vec)} != {dim}")
            vectors[word] = vec
    if not vectors:
        raise ConfigError(f"no vectors found in {path}")
    if unk == "zero":
        unk_vec = np.zeros(dim)
    else:
        unk_vec = np.mean(list(vectors.values()), axis=0)
    return EmbeddingTable(dim=dim, vectors=vectors, unk=unk_vec)


# Word families the synthetic table treats as near-synonyms, standing in for
# the neighborhood structure a pretrained table would provide. Members share
# a base direction plus word-specific noise.
SYNONYM_GROUPS: tuple[tuple[str, ...], ...] = (
    ("count", "many", "number", "amount", "total_count"),
    ("average", "avg", "mean"),
    ("maximum", "max", "highest", "top", "largest", "biggest"),
    ("minimum", "min", "lowest", "smallest"),
    ("sum", "total", "overall"),
    ("name", "fname", "lname", "called", "title"),
    ("salary", "pay", "wage", "earnings"),
    ("age", "old"),
    ("price", "cost", "fee"),
    ("city", "town"),
    ("country", "nation"),
    ("pet", "animal"),
    ("student", "pupil"),
    ("author", "writer"),
    ("book", "novel"),
    ("capacity", "size"),
    ("rating", "score"),
    ("weight", "heavy"),
    ("genre", "kind", "category", "type"),
    ("stadium", "arena", "venue"),
    ("flight", "trip"),
    ("shop", "store"),
    ("department", "division"),
    ("duration", "length"),
    ("budget", "funding"),
    ("stock", "inventory"),
    ("major", "subject"),
    ("year", "when"),
)


def _hash_vector(key: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}:{key}".encode()).digest()
    rng = np.random.RandomState(int.from_bytes(digest[:4], "big"))
    vec = rng.normal(size=dim)
    return vec / np.linalg.norm(vec)


def synthetic_table(words, dim: int = 50, seed: int = 0) -> EmbeddingTable:
    """Deterministic random embeddings for a vocabulary.

    Inflections of one base form share a vector (lookup goes through the
    lemmatizer), synonym-group members sit close together, everything else is
    near-orthogonal. Compounds ("pet_age") are left out of the table so that
    lookup composes them from their parts.
    """
    group_of: dict[str, tuple[str, float]] = {}
    for group in SYNONYM_GROUPS:
        for member in group:
            group_of[member] = (group[0], 0.45)

    vectors: dict[str, np.ndarray] = {}
    vocab = set()
    for word in words:
        word = strip_quotes(str(word)).lower()
        for part in word.replace("_", " ").split():
            if part:
                vocab.add(part)
    for group in SYNONYM_GROUPS:
        vocab.update(group)

    for word in sorted(vocab):
        lemma = lemmatize(word)
        base_key, noise = group_of.get(word) or group_of.get(lemma, (lemma, 0.0))
        vec = _hash_vector(base_key, dim, seed)
        if noise:
            vec = vec + noise * _hash_vector(lemma, dim, seed + 1)
            vec = vec / np.linalg.norm(vec)
        vectors[word] = vec
    unk = np.mean(list(vectors.values()), axis=0)
    return EmbeddingTable(dim=dim, vectors=vectors, unk=unk)


# ---------------------------------------------------------------------------
# Projection layer and encoding


@dataclass
class ProjectionLayer:
    weight: np.ndarray  # d x d
    bias: np.ndarray  # d

    def __post_init__(self):
        if self.weight.ndim != 2 or self.weight.shape[0] != self.weight.shape[1]:
            raise ConfigError("projection weight must be square")
        if self.bias.shape != (self.weight.shape[0],):
            raise ConfigError("projection bias must match weight dimension")
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias).all()):
            raise ConfigError("projection layer has non-finite entries")

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "ProjectionLayer":
        return cls(weight=np.eye(dim), bias=np.zeros(dim))

    def copy(self) -> "ProjectionLayer":
        return ProjectionLayer(self.weight.copy(), self.bias.copy())

    def apply(self, raw: np.ndarray) -> np.ndarray:
        return np.tanh(self.weight @ raw + self.bias[:, None])


def encode(tokens: list[str], table: EmbeddingTable, layer: ProjectionLayer) -> np.ndarray:
    """Encode a token list as a d x N matrix: tanh(W e_i + b) per column."""
    if layer.dim != table.dim:
        raise ConfigError(f"layer dimension {layer.dim} != embedding dimension {table.dim}")
    return layer.apply(table.matrix(tokens))


def cosine_matrix(h: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Pairwise cosine of column vectors; zero-norm columns give 0."""
    hn = np.linalg.norm(h, axis=0)
    un = np.linalg.norm(u, axis=0)
    denom = np.outer(hn, un)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (h.T @ u) / denom
    a[~np.isfinite(a)] = 0.0
    return a


def sentence_similarity(a: np.ndarray) -> float:
    """Mean over question tokens of their best restatement-token similarity."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ConfigError("similarity matrix must be a nonempty 2-d array")
    return float(np.mean(np.max(a, axis=1)))


def loss(a_pos: np.ndarray, a_neg: np.ndarray, margin: float, lam: float) -> float:
    """Hinge on the sentence-score margin plus L1 of both matrices."""
    a_pos = np.asarray(a_pos, dtype=np.float64)
    a_neg = np.asarray(a_neg, dtype=np.float64)
    hinge = max(0.0, margin - (sentence_similarity(a_pos) - sentence_similarity(a_neg)))
    return float(hinge + lam * (np.abs(a_pos).sum() + np.abs(a_neg).sum()))


# ---------------------------------------------------------------------------
# Training data


@dataclass(frozen=True)
class TrainingTriple:
    x_tokens: tuple[str, ...]
    pos: RestatedUtterance
    neg: RestatedUtterance
    example_index: int
    kind: str  # "random" | "perturbed"


@dataclass
class TrainConfig:
    margin: float = 1.0
    lam: float = 0.5
    learning_rate: float = 0.01
    epochs: int = 20
    negatives_random: int = 50
    negatives_perturbed: int = 50
    seed: int = 13

    def __post_init__(self):
        if self.margin <= 0:
            raise ConfigError("margin must be positive")
        if self.lam < 0:
            raise ConfigError("lambda must be nonnegative")


def make_triples(
    examples: list[Example],
    schemas: list[DatabaseSchema],
    config: TrainConfig,
    templates: dict | None = None,
) -> list[TrainingTriple]:
    """Build (question, positive restatement, negative restatement) triples.

    Per pair: `negatives_random` restatements picked from other pairs and
    `negatives_perturbed` copies of the positive with column/value tokens
    swapped inside the same schema. Seeded and reproducible.
    """
    from . import sql_ir

    by_id = {s.db_id: s for s in schemas}
    rng = random.Random(config.seed)
    positives: list[RestatedUtterance] = []
    x_token_lists: list[tuple[str, ...]] = []
    for ex in examples:
        schema = by_id[ex.db_id]
        tree = sql_ir.to_ir(sql_ir.parse_sql(ex.gold_sql, schema), schema)
        positives.append(restate(tree, schema, templates))
        x_token_lists.append(tuple(tokenize(ex.question)))

    value_pool: dict[str, list[str]] = {}
    for ex, pos in zip(examples, positives):
        pool = value_pool.setdefault(ex.db_id, [])
        for tok in pos.tokens:
            if tok.origin == ORIGIN_VALUE and tok.surface not in pool:
                pool.append(tok.surface)

    total_negs = config.negatives_random + config.negatives_perturbed
    if total_negs > 0 and config.negatives_random > 0 and len(examples) < 2:
        raise TrainingError("random negatives need at least two examples")

    triples: list[TrainingTriple] = []
    for i, (ex, pos) in enumerate(zip(examples, positives)):
        others = [j for j in range(len(examples)) if j != i and positives[j].text != pos.text]
        if config.negatives_random > 0 and not others:
            raise TrainingError(f"no distinct negative source for example {i}")
        for _ in range(config.negatives_random):
            j = rng.choice(others)
            triples.append(TrainingTriple(x_token_lists[i], pos, positives[j], i, "random"))
        schema = by_id[ex.db_id]
        for _ in range(config.negatives_perturbed):
            neg = _perturb(pos, schema, value_pool.get(ex.db_id, []), rng)
            if neg is None:  # nothing replaceable; fall back to a random pick
                if not others:
                    continue
                triples.append(TrainingTriple(x_token_lists[i], pos, positives[rng.choice(others)], i, "perturbed"))
            else:
                triples.append(TrainingTriple(x_token_lists[i], pos, neg, i, "perturbed"))
    return triples


def _perturb(
    pos: RestatedUtterance,
    schema: DatabaseSchema,
    value_pool: list[str],
    rng: random.Random,
) -> RestatedUtterance | None:
    """Copy the positive with each column/value token independently replaced
    with probability 1/2; at least one column is always replaced."""
    all_columns = [c.name for t in schema.tables for c in t.columns]
    column_slots = [i for i, t in enumerate(pos.tokens) if t.origin == ORIGIN_COLUMN]
    value_slots = [i for i, t in enumerate(pos.tokens) if t.origin == ORIGIN_VALUE]
    if not column_slots and not value_slots:
        return None

    for _ in range(20):
        tokens = list(pos.tokens)
        changed = False
        forced = rng.choice(column_slots) if column_slots else None
        for i in column_slots:
            if i == forced or rng.random() < 0.5:
                alternatives = [c for c in all_columns if c != tokens[i].surface]
                if alternatives:
                    tokens[i] = RestToken(rng.choice(alternatives), ORIGIN_COLUMN)
                    changed = True
        for i in value_slots:
            if rng.random() < 0.5:
                alternatives = [v for v in value_pool if v != tokens[i].surface]
                if alternatives:
                    tokens[i] = RestToken(rng.choice(alternatives), ORIGIN_VALUE)
                    changed = True
        text = " ".join(t.surface for t in tokens)
        if changed and text != pos.text:
            return RestatedUtterance(text=text, tokens=tuple(tokens))
    return None


# ---------------------------------------------------------------------------
# Loss gradients and the training loop


def loss_and_grads(
    e_x: np.ndarray,
    e_pos: np.ndarray,
    e_neg: np.ndarray,
    layer: ProjectionLayer,
    margin: float,
    lam: float,
):
    """Loss plus analytic d(loss)/d(weight), d(loss)/d(bias) for one triple.

    Subgradient conventions: 0 at the hinge kink and at |.|_1 zero entries;
    the row-max routes its gradient to the first argmax column.
    """
    w, b = layer.weight, layer.bias
    h = np.tanh(w @ e_x + b[:, None])
    u_pos = np.tanh(w @ e_pos + b[:, None])
    u_neg = np.tanh(w @ e_neg + b[:, None])
    a_pos = cosine_matrix(h, u_pos)
    a_neg = cosine_matrix(h, u_neg)
    s_pos = sentence_similarity(a_pos)
    s_neg = sentence_similarity(a_neg)
    slack = margin - (s_pos - s_neg)
    total = max(0.0, slack) + lam * (np.abs(a_pos).sum() + np.abs(a_neg).sum())

    n = e_x.shape[1]
    g = 1.0 if slack > 0 else 0.0

    def d_a(a: np.ndarray, sign_s: float) -> np.ndarray:
        grad = lam * np.sign(a)
        if g:
            rows = np.arange(a.shape[0])
            grad[rows, np.argmax(a, axis=1)] += sign_s * g / n
        return grad

    da_pos = d_a(a_pos, -1.0)
    da_neg = d_a(a_neg, +1.0)

    dw = np.zeros_like(w)
    db = np.zeros_like(b)
    dh_total = np.zeros_like(h)

    for a, da, u, e_u in ((a_pos, da_pos, u_pos, e_pos), (a_neg, da_neg, u_neg, e_neg)):
        hn = np.linalg.norm(h, axis=0)
        un = np.linalg.norm(u, axis=0)
        hn_safe = np.where(hn == 0, np.inf, hn)
        un_safe = np.where(un == 0, np.inf, un)
        scaled = da / np.outer(hn_safe, un_safe)
        dh = u @ scaled.T - h * ((da * a).sum(axis=1) / hn_safe**2)[None, :]
        du = h @ scaled - u * ((da * a).sum(axis=0) / un_safe**2)[None, :]
        dh_total += dh
        dz_u = du * (1.0 - u**2)
        dw += dz_u @ e_u.T
        db += dz_u.sum(axis=1)

    dz_h = dh_total * (1.0 - h**2)
    dw += dz_h @ e_x.T
    db += dz_h.sum(axis=1)
    return float(total), dw, db, (a_pos, a_neg, s_pos, s_neg)


@dataclass
class TrainResult:
    layer: ProjectionLayer
    threshold: float
    epoch_losses: list[float] = field(default_factory=list)


def pair_scores(triple_mats, layer: ProjectionLayer) -> tuple[float, float]:
    e_x, e_pos, e_neg = triple_mats
    h = layer.apply(e_x)
    return (
        sentence_similarity(cosine_matrix(h, layer.apply(e_pos))),
        sentence_similarity(cosine_matrix(h, layer.apply(e_neg))),
    )


def compute_threshold(triples: list[TrainingTriple], table: EmbeddingTable, layer: ProjectionLayer) -> float:
    """Mean pair score over every (x, x') occurrence in the triples:
    p = (1/2|X|) * sum(s_pos + s_neg)."""
    if not triples:
        raise TrainingError("cannot compute a threshold without triples")
    total = 0.0
    for t in triples:
        s_pos, s_neg = pair_scores(_triple_matrices(t, table), layer)
        total += s_pos + s_neg
    return total / (2 * len(triples))


def _triple_matrices(t: TrainingTriple, table: EmbeddingTable):
    return (
        table.matrix(list(t.x_tokens)),
        table.matrix(t.pos.surfaces()),
        table.matrix(t.neg.surfaces()),
    )


def train(
    triples: list[TrainingTriple],
    table: EmbeddingTable,
    config: TrainConfig,
) -> TrainResult:
    """Per-triple SGD from an identity projection; returns the trained layer,
    the similarity threshold computed with it, and per-epoch mean losses."""
    if not triples:
        raise TrainingError("training needs at least one triple")
    layer = ProjectionLayer.identity(table.dim)
    mats = [_triple_matrices(t, table) for t in triples]
    rng = random.Random(config.seed)
    order = list(range(len(triples)))
    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        rng.shuffle(order)
        total = 0.0
        for idx in order:
            e_x, e_pos, e_neg = mats[idx]
            value, dw, db, _ = loss_and_grads(e_x, e_pos, e_neg, layer, config.margin, config.lam)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, triple {idx}")
            layer.weight -= config.learning_rate * dw
            layer.bias -= config.learning_rate * db
            total += value
        epoch_losses.append(total / len(triples))

    threshold = 0.0
    for m in mats:
        s_pos, s_neg = pair_scores(m, layer)
        threshold += s_pos + s_neg
    threshold /= 2 * len(triples)
    return TrainResult(layer=layer, threshold=threshold, epoch_losses=epoch_losses)


# ---------------------------------------------------------------------------
# Persistence and the external-encoder contract


def save_model(path: str, layer: ProjectionLayer, threshold: float):
    payload = {
        "dim": layer.dim,
        "weight": layer.weight.tolist(),
        "bias": layer.bias.tolist(),
        "threshold": threshold,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path: str) -> tuple[ProjectionLayer, float]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        layer = ProjectionLayer(
            weight=np.array(payload["weight"], dtype=np.float64),
            bias=np.array(payload["bias"], dtype=np.float64),
        )
        threshold = float(payload["threshold"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad model file {path}: {exc}") from exc
    if layer.dim != payload.get("dim", layer.dim):
        raise ConfigError(f"model file {path} has inconsistent dimensions")
    return layer, threshold


class BuiltinEncoder:
    """Default pair encoder: static table + trained projection."""

    def __init__(self, table: EmbeddingTable, layer: ProjectionLayer):
        self.table = table
        self.layer = layer

    def encode_pair(self, x_tokens: list[str], xp_tokens: list[str]) -> tuple[np.ndarray, np.ndarray]:
        return encode(x_tokens, self.table, self.layer), encode(xp_tokens, self.table, self.layer)


class HttpEncoder:
    """Client for the external-encoder contract: POST the two token lists,
    receive the two projected matrices (row-major, d rows)."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def encode_pair(self, x_tokens: list[str], xp_tokens: list[str]) -> tuple[np.ndarray, np.ndarray]:
        import httpx

        response = httpx.post(
            self.url,
            json={"tokens_x": list(x_tokens), "tokens_x_prime": list(xp_tokens)},
            timeout=self.timeout,
        )
        response.raise_for_status()
        payload = response.json()
        h = np.array(payload["h"], dtype=np.float64)
        u = np.array(payload["u"], dtype=np.float64)
        if h.ndim != 2 or u.ndim != 2 or h.shape[1] != len(x_tokens) or u.shape[1] != len(xp_tokens):
            raise ConfigError("external encoder returned matrices with wrong shape")
        return h, u
