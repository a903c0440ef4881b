"""Per-class scores, confusion matrices and punctuated-text rendering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dialogue import NUM_CLASSES, SIDES, Dialogue, PunctuationClass
from .errors import DataError

NON_BLANK = (PunctuationClass.COMMA, PunctuationClass.DOT, PunctuationClass.QUESTION)


@dataclass(frozen=True)
class ClassScores:
    """Precision, recall and F1 in percent, indexed by class; 0/0 counts as 0."""

    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray

    def macro_f1(self, classes: Sequence[int] = NON_BLANK) -> float:
        return float(np.mean([self.f1[c] for c in classes]))

    def macro_precision(self, classes: Sequence[int] = NON_BLANK) -> float:
        return float(np.mean([self.precision[c] for c in classes]))

    def macro_recall(self, classes: Sequence[int] = NON_BLANK) -> float:
        return float(np.mean([self.recall[c] for c in classes]))

    def table(self) -> str:
        lines = ["class\tprecision\trecall\tf1\tsupport"]
        for c in PunctuationClass:
            lines.append(f"{c.symbol}\t{self.precision[c]:.1f}\t{self.recall[c]:.1f}"
                         f"\t{self.f1[c]:.1f}\t{int(self.support[c])}")
        return "\n".join(lines)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray

    def normalized(self) -> np.ndarray:
        """Each row divided by its total; empty rows stay zero."""
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def table(self) -> str:
        norm = self.normalized()
        header = "true\\pred\t" + "\t".join(c.symbol for c in PunctuationClass)
        lines = [header]
        for c in PunctuationClass:
            lines.append(c.symbol + "\t" + "\t".join(f"{v:.3f}" for v in norm[c]))
        return "\n".join(lines)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.zeros(num.shape), where=den > 0)


def confusion_matrix(true: Sequence[int], predicted: Sequence[int],
                     n_classes: int = NUM_CLASSES) -> ConfusionMatrix:
    true = np.asarray(true, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if true.shape != predicted.shape:
        raise DataError(f"label sequences differ in length: {true.shape} vs {predicted.shape}")
    if true.size and (min(true.min(), predicted.min()) < 0
                      or max(true.max(), predicted.max()) >= n_classes):
        raise DataError("labels out of range")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (true, predicted), 1)
    return ConfusionMatrix(counts)


def score(true: Sequence[int], predicted: Sequence[int]) -> tuple[ClassScores, ConfusionMatrix]:
    cm = confusion_matrix(true, predicted)
    tp = np.diag(cm.counts).astype(np.float64)
    precision = 100.0 * _ratio(tp, cm.counts.sum(axis=0).astype(np.float64))
    recall = 100.0 * _ratio(tp, cm.counts.sum(axis=1).astype(np.float64))
    f1 = _ratio(2 * precision * recall, precision + recall)
    return ClassScores(precision, recall, f1, cm.counts.sum(axis=1)), cm


# -- rendering -----------------------------------------------------------------

def _is_annotation(token: str) -> bool:
    return token.startswith("[") and token.endswith("]")


def _render_words(pairs, pending: bool) -> tuple[list[str], bool]:
    out = []
    for text, label in pairs:
        if not _is_annotation(text) and pending:
            text = text[:1].upper() + text[1:]
            pending = False
        if label != PunctuationClass.BLANK:
            text += PunctuationClass(label).symbol
        if label == PunctuationClass.DOT:
            pending = True
        out.append(text)
    return out, pending


def _check(dialogue: Dialogue, labels) -> list:
    labels = list(labels)
    if len(labels) != len(dialogue):
        raise DataError("label sequence does not match the dialogue length")
    return labels


def render_punctuated(dialogue: Dialogue, labels: Sequence[int]) -> dict[str, str]:
    """Punctuated text per channel.

    A word is capitalized only when it opens its channel or follows a
    dot on the same channel; commas and question marks never trigger a
    capital, and bracketed annotations are left as they are (the capital
    passes to the next real word).
    """
    labels = _check(dialogue, labels)
    text = {}
    for side in SIDES:
        pairs = [(w.text, lab) for w, lab in zip(dialogue.words, labels) if w.side == side]
        words, _ = _render_words(pairs, True)
        text[side] = " ".join(words)
    return text


def render_turns(dialogue: Dialogue, labels: Sequence[int]) -> str:
    """Interleaved ``A: ...`` / ``B: ...`` lines, one per run of same-side words.

    Capitalization state carries over between the turns of a channel.
    """
    labels = _check(dialogue, labels)
    pending = {side: True for side in SIDES}
    lines = []
    run: list = []
    run_side = None
    for w, lab in list(zip(dialogue.words, labels)) + [(None, None)]:
        if w is None or w.side != run_side:
            if run:
                words, pending[run_side] = _render_words(run, pending[run_side])
                lines.append(f"{run_side}: " + " ".join(words))
            if w is None:
                break
            run, run_side = [], w.side
        run.append((w.text, lab))
    return "\n".join(lines)
