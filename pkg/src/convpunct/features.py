"""Per-word model inputs: word embedding, conversation side, word timing.

Row layout (303 columns with 300-d embeddings):

    [0, 300)  embedding, all zeros for out-of-vocabulary words
    300       side, A -> 0.0, B -> 1.0
    301       speaker-standardized interval since the speaker's previous word
    302       speaker-standardized word duration
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dialogue import SIDES, Dialogue
from .errors import ParseError

log = logging.getLogger(__name__)

EMBEDDING_DIM = 300
DEFAULT_VOCAB_SIZE = 50000


class EmbeddingTable:
    """Vocabulary-to-row map over a dense embedding matrix.

    The matrix carries one extra all-zero row at the end, used for every
    out-of-vocabulary token.
    """

    def __init__(self, vocab: dict[str, int], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(vocab):
            raise ValueError("vectors must have one row per vocabulary entry")
        self.vocab = dict(vocab)
        self.dim = vectors.shape[1]
        self.matrix = np.vstack([vectors, np.zeros((1, self.dim), np.float32)])
        self.matrix.setflags(write=False)
        self.oov_index = len(vocab)

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def index(self, token: str) -> int:
        return self.vocab.get(token, self.oov_index)

    def lookup(self, token: str) -> np.ndarray:
        return self.matrix[self.index(token)]

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        idx = np.fromiter((self.index(t) for t in tokens), dtype=np.int64, count=len(tokens))
        return self.matrix[idx]


def frequency_ranking(dialogues: Iterable[Dialogue]) -> list[str]:
    """Corpus tokens, most frequent first; ties broken alphabetically."""
    counts = Counter(w.text for d in dialogues for w in d.words)
    return sorted(counts, key=lambda t: (-counts[t], t))


def load_embeddings(lines: str | Iterable[str], ranking: Sequence[str],
                    max_vocab: int = DEFAULT_VOCAB_SIZE,
                    dim: int = EMBEDDING_DIM) -> EmbeddingTable:
    """Build a table over the ``max_vocab`` best-ranked tokens that have vectors.

    ``lines`` holds ``token v1 ... v<dim>`` rows (a string or any iterable
    of lines, e.g. an open file). Only rows for ranked tokens are kept, but
    every row is checked for the right number of values.
    """
    if isinstance(lines, str):
        lines = lines.splitlines()
    wanted = set(ranking)
    found: dict[str, np.ndarray] = {}
    seen: set[str] = set()
    for lineno, line in enumerate(lines, 1):
        parts = line.rstrip("\n").rstrip(" ").split(" ")
        if len(parts) == 1 and not parts[0]:
            continue
        if len(parts) != dim + 1:
            raise ParseError(f"expected {dim} values, got {len(parts) - 1}", lineno)
        token = parts[0]
        if token in seen:
            log.warning("line %d: duplicate embedding for %r, keeping the last", lineno, token)
        seen.add(token)
        if token in wanted:
            try:
                found[token] = np.array(parts[1:], dtype=np.float32)
            except ValueError:
                raise ParseError(f"non-numeric value in vector for {token!r}", lineno) from None
    kept = [t for t in ranking if t in found][:max_vocab]
    vectors = np.stack([found[t] for t in kept]) if kept else np.zeros((0, dim), np.float32)
    return EmbeddingTable({t: i for i, t in enumerate(kept)}, vectors)


def read_embeddings(path, ranking: Sequence[str], max_vocab: int = DEFAULT_VOCAB_SIZE,
                    dim: int = EMBEDDING_DIM) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        return load_embeddings(fh, ranking, max_vocab, dim)


def time_features(dialogue: Dialogue, per_speaker: bool = True) -> np.ndarray:
    """Raw (interval, duration) per word, shape (T, 2).

    The interval is measured from the start of the same speaker's previous
    word, or from the previous word in dialogue order when ``per_speaker``
    is off. A word with no predecessor gets interval 0.
    """
    raw = np.zeros((len(dialogue), 2), dtype=np.float64)
    last_start: dict[str | None, float] = {}
    for i, w in enumerate(dialogue.words):
        key = w.side if per_speaker else None
        if key in last_start:
            raw[i, 0] = w.start - last_start[key]
        last_start[key] = w.start
        raw[i, 1] = w.duration
    return raw


def _zscore(values: np.ndarray) -> np.ndarray:
    if len(values) < 2:
        return np.zeros_like(values)
    mean = values.mean()
    std = values.std()
    # All-equal inputs can leave a rounding-level std; treat as zero variance.
    if std <= 1e-12 * max(1.0, abs(mean)):
        return np.zeros_like(values)
    return (values - mean) / std


def standardize_per_speaker(raw: np.ndarray, dialogue: Dialogue) -> np.ndarray:
    """Z-score each column using only the words of the same speaker."""
    raw = np.asarray(raw, dtype=np.float64)
    out = np.zeros_like(raw)
    sides = np.array([w.side for w in dialogue.words])
    for side in SIDES:
        idx = np.flatnonzero(sides == side)
        for col in range(raw.shape[1]):
            out[idx, col] = _zscore(raw[idx, col])
    return out


@dataclass
class FeatureMatrix:
    rows: np.ndarray
    mask: np.ndarray

    @property
    def side_column(self) -> int:
        return self.rows.shape[1] - 3

    def __len__(self) -> int:
        return self.rows.shape[0]


def featurize(dialogue: Dialogue, table: EmbeddingTable, use_time: bool = True,
              per_speaker: bool = True) -> FeatureMatrix:
    T = len(dialogue)
    rows = np.zeros((T, table.dim + 3), dtype=np.float32)
    rows[:, :table.dim] = table.embed([w.text for w in dialogue.words])
    rows[:, table.dim] = [0.0 if w.side == "A" else 1.0 for w in dialogue.words]
    if use_time and T:
        raw = time_features(dialogue, per_speaker)
        rows[:, table.dim + 1:] = standardize_per_speaker(raw, dialogue)
    return FeatureMatrix(rows, np.ones(T, dtype=bool))


def noise_column_mask(width: int) -> np.ndarray:
    """Columns that receive input noise: everything except the side flag."""
    cols = np.ones(width, dtype=bool)
    cols[width - 3] = False
    return cols


def add_noise(matrix: FeatureMatrix, sigma: float, rng: np.random.Generator) -> FeatureMatrix:
    if sigma < 0:
        raise ValueError(f"noise sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return FeatureMatrix(matrix.rows.copy(), matrix.mask.copy())
    rows = matrix.rows.copy()
    cols = noise_column_mask(rows.shape[1])
    noise = rng.normal(0.0, sigma, size=(rows.shape[0], int(cols.sum())))
    rows[:, cols] += noise.astype(rows.dtype)
    return FeatureMatrix(rows, matrix.mask.copy())
