"""Core dialogue representation: words from both channels ordered in time."""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DataError, MissingLabelError, ParseError

SIDES = ("A", "B")


class PunctuationClass(enum.IntEnum):
    BLANK = 0
    COMMA = 1
    DOT = 2
    QUESTION = 3

    @property
    def symbol(self) -> str:
        return _SYMBOLS[self]

    @classmethod
    def from_symbol(cls, symbol: str) -> "PunctuationClass":
        try:
            return _FROM_SYMBOL[symbol]
        except KeyError:
            raise DataError(f"unknown punctuation symbol {symbol!r}") from None


_SYMBOLS = {
    PunctuationClass.BLANK: "_",
    PunctuationClass.COMMA: ",",
    PunctuationClass.DOT: ".",
    PunctuationClass.QUESTION: "?",
}
_FROM_SYMBOL = {v: k for k, v in _SYMBOLS.items()}

NUM_CLASSES = len(PunctuationClass)


@dataclass(frozen=True)
class Word:
    """One spoken token.

    Attributes:
        text: lowercased token without trailing punctuation.
        side: conversation channel, ``"A"`` or ``"B"``.
        start: start offset in seconds.
        duration: duration in seconds.
        label: punctuation following the word, or None for inference input.
    """

    text: str
    side: str
    start: float
    duration: float
    label: PunctuationClass | None = None

    def __post_init__(self):
        if not self.text or any(ch.isspace() for ch in self.text):
            raise DataError(f"invalid word text {self.text!r}")
        if self.side not in SIDES:
            raise DataError(f"invalid side {self.side!r}")
        for name in ("start", "duration"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise DataError(f"{name} must be finite and non-negative, got {value!r}")
        if self.label is not None and not isinstance(self.label, PunctuationClass):
            object.__setattr__(self, "label", PunctuationClass(self.label))


@dataclass(frozen=True)
class Dialogue:
    id: str
    words: tuple[Word, ...] = field(default_factory=tuple)

    def __post_init__(self):
        words = tuple(self.words)
        object.__setattr__(self, "words", words)
        labelled = {w.label is not None for w in words}
        if len(labelled) > 1:
            raise DataError(f"dialogue {self.id}: mixes labelled and unlabelled words")
        for prev, cur in zip(words, words[1:]):
            if (cur.start, cur.side) < (prev.start, prev.side):
                raise DataError(f"dialogue {self.id}: words are not sorted by start time")

    def __len__(self) -> int:
        return len(self.words)

    @property
    def labelled(self) -> bool:
        return bool(self.words) and self.words[0].label is not None

    def labels(self) -> list[PunctuationClass]:
        if self.words and not self.labelled:
            raise MissingLabelError(f"dialogue {self.id} is unlabelled")
        return [w.label for w in self.words]

    def channel(self, side: str) -> list[Word]:
        return [w for w in self.words if w.side == side]


def sort_words(words: Iterable[Word]) -> list[Word]:
    """Order words by start time; ties go to side A, then to input order.

    Python's sort is stable, so words of the same side keep their
    original per-channel order when their start times coincide.
    """
    words = list(words)
    for w in words:
        if not math.isfinite(w.start):
            raise DataError(f"non-finite start time for {w.text!r}")
    return sorted(words, key=lambda w: (w.start, w.side))


@dataclass(frozen=True)
class ClassHistogram:
    counts: dict[PunctuationClass, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def percentages(self) -> dict[PunctuationClass, float]:
        total = self.total
        if total == 0:
            return {c: 0.0 for c in PunctuationClass}
        return {c: round(100.0 * n / total, 1) for c, n in self.counts.items()}

    def format(self) -> str:
        pct = self.percentages()
        lines = [f"{'class':<10}{'count':>10}{'percent':>10}"]
        for c in PunctuationClass:
            lines.append(f"{c.name.lower():<10}{self.counts[c]:>10}{pct[c]:>9.1f}%")
        return "\n".join(lines)


def class_histogram(dialogues: Iterable[Dialogue]) -> ClassHistogram:
    counter: Counter = Counter()
    for d in dialogues:
        for w in d.words:
            if w.label is None:
                raise MissingLabelError(f"dialogue {d.id}: word {w.text!r} has no label")
            counter[w.label] += 1
    return ClassHistogram({c: counter.get(c, 0) for c in PunctuationClass})


# -- serialization ---------------------------------------------------------

def format_dialogue(dialogue: Dialogue) -> str:
    """Serialize as tab-separated ``id side start duration text label`` lines.

    Unlabelled dialogues omit the label column.
    """
    lines = []
    for w in dialogue.words:
        fields = [dialogue.id, w.side, f"{w.start:.3f}", f"{w.duration:.3f}", w.text]
        if w.label is not None:
            fields.append(w.label.symbol)
        lines.append("\t".join(fields))
    return "".join(line + "\n" for line in lines)


def format_corpus(dialogues: Iterable[Dialogue]) -> str:
    return "".join(format_dialogue(d) for d in dialogues)


def parse_corpus(text: str) -> list[Dialogue]:
    """Parse one or more serialized dialogues, preserving file order."""
    order: list[str] = []
    by_id: dict[str, list[Word]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.rstrip("\n").split("\t")
        if len(fields) not in (5, 6):
            raise ParseError(f"expected 5 or 6 tab-separated fields, got {len(fields)}", lineno)
        conv, side, start, duration, token = fields[:5]
        try:
            label = PunctuationClass.from_symbol(fields[5]) if len(fields) == 6 else None
            word = Word(token, side, float(start), float(duration), label)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if conv not in by_id:
            order.append(conv)
            by_id[conv] = []
        by_id[conv].append(word)
    # Re-sort: rounding to 3 decimals can create new cross-channel ties.
    return [Dialogue(conv, tuple(sort_words(by_id[conv]))) for conv in order]


def read_corpus(path) -> list[Dialogue]:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh.read())


def write_corpus(path, dialogues: Sequence[Dialogue]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_corpus(dialogues))
