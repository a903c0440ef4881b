"""Needleman-Wunsch alignment of timed and punctuated transcripts.

Labels are transferred from the punctuated tokens onto the timed tokens
they align with. Words present in only one transcript, and aligned
pairs whose tokens differ, are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .dialogue import Dialogue, Word, sort_words
from .errors import DataError
from .ingest import PunctToken, PunctTranscript, TimedToken, TimedTranscript

GAP = None

DEFAULT_MAX_CELLS = 10**8


class AlignmentTooLargeError(DataError):
    pass


@dataclass(frozen=True)
class ScoringScheme:
    match: int = 1
    mismatch: int = -1
    gap: int = -1

    def __post_init__(self):
        if not (self.match > self.mismatch and self.match > self.gap):
            raise ValueError("match score must exceed both mismatch and gap scores")


@dataclass(frozen=True)
class AlignmentResult:
    pairs: list[tuple[int | None, int | None]]
    score: int


def score_matrix(left: Sequence[Hashable], right: Sequence[Hashable],
                 scheme: ScoringScheme) -> np.ndarray:
    """Fill the (n+1) x (m+1) global alignment DP table.

    With a linear gap cost the horizontal recurrence
    ``H[i, j] = max(D[i, j], H[i, j-1] + gap)`` unrolls into a running
    maximum of ``D[i, k] - gap * k``, so each row is one vectorized pass.
    """
    n, m = len(left), len(right)
    gap = scheme.gap
    H = np.empty((n + 1, m + 1), dtype=np.int64)
    H[0, :] = gap * np.arange(m + 1)
    H[:, 0] = gap * np.arange(n + 1)
    if n == 0 or m == 0:
        return H
    # Map tokens to ints once so row comparisons are array ops.
    ids: dict = {}
    left_ids = np.array([ids.setdefault(t, len(ids)) for t in left])
    right_ids = np.array([ids.setdefault(t, len(ids)) for t in right])
    ramp = gap * np.arange(1, m + 1)
    for i in range(1, n + 1):
        sub = np.where(right_ids == left_ids[i - 1], scheme.match, scheme.mismatch)
        D = np.maximum(H[i - 1, :-1] + sub, H[i - 1, 1:] + gap)
        # Column 0 seeds the running max so leading horizontal gaps are allowed.
        shifted = np.concatenate(([H[i, 0]], D - ramp))
        H[i, 1:] = np.maximum.accumulate(shifted)[1:] + ramp
    return H


def nw_align(left: Sequence[Hashable], right: Sequence[Hashable],
             scheme: ScoringScheme = ScoringScheme(),
             max_cells: int = DEFAULT_MAX_CELLS) -> AlignmentResult:
    """Globally align two token sequences.

    Traceback prefers a diagonal step, then a gap in ``right`` (consume a
    left token), then a gap in ``left``.
    """
    n, m = len(left), len(right)
    if n * m > max_cells:
        raise AlignmentTooLargeError(
            f"alignment of {n} x {m} tokens exceeds the {max_cells} cell budget")
    H = score_matrix(left, right, scheme)
    pairs: list[tuple[int | None, int | None]] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            sub = scheme.match if left[i - 1] == right[j - 1] else scheme.mismatch
            if H[i, j] == H[i - 1, j - 1] + sub:
                pairs.append((i - 1, j - 1))
                i -= 1
                j -= 1
                continue
        if i > 0 and H[i, j] == H[i - 1, j] + scheme.gap:
            pairs.append((i - 1, GAP))
            i -= 1
        else:
            pairs.append((GAP, j - 1))
            j -= 1
    pairs.reverse()
    return AlignmentResult(pairs, int(H[n, m]))


def normalize(token: str) -> str:
    return token.lower()


@dataclass
class MergeStats:
    kept: int = 0
    dropped_timed: int = 0
    dropped_punct: int = 0

    def __iadd__(self, other: "MergeStats") -> "MergeStats":
        self.kept += other.kept
        self.dropped_timed += other.dropped_timed
        self.dropped_punct += other.dropped_punct
        return self

    def format(self) -> str:
        return f"kept={self.kept} dropped_timed={self.dropped_timed} dropped_punct={self.dropped_punct}"


def merge_channel(timed: Sequence[TimedToken], punct: Sequence[PunctToken],
                  scheme: ScoringScheme = ScoringScheme(),
                  stats: MergeStats | None = None,
                  max_cells: int = DEFAULT_MAX_CELLS) -> list[Word]:
    left = [normalize(t.token) for t in timed]
    right = [normalize(p.token) for p in punct]
    result = nw_align(left, right, scheme, max_cells)
    words = []
    for li, ri in result.pairs:
        if li is GAP or ri is GAP or left[li] != right[ri]:
            continue
        t = timed[li]
        words.append(Word(left[li], t.side, t.start, t.duration, punct[ri].label))
    if stats is not None:
        stats += MergeStats(len(words), len(timed) - len(words), len(punct) - len(words))
    return words


def build_dialogue(conv_id: str, channel_a: Sequence[Word], channel_b: Sequence[Word]) -> Dialogue:
    return Dialogue(conv_id, tuple(sort_words(list(channel_a) + list(channel_b))))


def align_transcripts(timed: TimedTranscript, punct: PunctTranscript,
                      scheme: ScoringScheme = ScoringScheme(),
                      conv_id: str | None = None,
                      max_cells: int = DEFAULT_MAX_CELLS) -> tuple[Dialogue, MergeStats]:
    """Merge both channels of one conversation into a labelled dialogue."""
    stats = MergeStats()
    channels = [merge_channel(timed[s], punct[s], scheme, stats, max_cells) for s in ("A", "B")]
    conv_id = conv_id or timed.conv_id
    if conv_id is None:
        raise DataError("conversation id unknown: empty timed transcript and none given")
    return build_dialogue(conv_id, *channels), stats
