"""Readers for the two transcript families.

* time-marked words (CTM style): ``conv-id channel start duration token``
* punctuated utterances: ``start end channel: free text``

Capitalization is dropped here; it is regenerated at render time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .dialogue import SIDES, PunctuationClass
from .errors import DataError, ParseError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimedToken:
    token: str
    side: str
    start: float
    duration: float


@dataclass(frozen=True)
class PunctToken:
    token: str
    label: PunctuationClass
    side: str


@dataclass
class TimedTranscript:
    conv_id: str | None
    channels: dict[str, list[TimedToken]] = field(
        default_factory=lambda: {s: [] for s in SIDES})

    def __getitem__(self, side: str) -> list[TimedToken]:
        return self.channels[side]


@dataclass
class PunctTranscript:
    channels: dict[str, list[PunctToken]] = field(
        default_factory=lambda: {s: [] for s in SIDES})

    def __getitem__(self, side: str) -> list[PunctToken]:
        return self.channels[side]


def _parse_time(value: str, what: str, lineno: int) -> float:
    try:
        t = float(value)
    except ValueError:
        raise ParseError(f"{what} is not a number: {value!r}", lineno) from None
    if not math.isfinite(t):
        raise ParseError(f"{what} is not finite: {value!r}", lineno)
    if t < 0:
        raise DataError(f"line {lineno}: negative {what} {t}")
    return t


def parse_ctm(text: str) -> TimedTranscript:
    conv_id = None
    transcript = TimedTranscript(None)
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split()
        if len(fields) != 5:
            raise ParseError(f"expected 5 fields, got {len(fields)}", lineno)
        conv, side, start, duration, token = fields
        if side not in SIDES:
            raise ParseError(f"channel must be A or B, got {side!r}", lineno)
        if conv_id is None:
            conv_id = conv
        elif conv != conv_id:
            raise DataError(f"line {lineno}: conversation id {conv!r} differs from {conv_id!r}")
        transcript.channels[side].append(TimedToken(
            token,
            side,
            _parse_time(start, "start", lineno),
            _parse_time(duration, "duration", lineno),
        ))
    transcript.conv_id = conv_id
    for side in SIDES:
        transcript.channels[side].sort(key=lambda t: t.start)
    return transcript


def format_ctm(transcript: TimedTranscript) -> str:
    """Canonical form: channel A then B, 3-decimal times, single spaces."""
    lines = []
    for side in SIDES:
        for t in transcript.channels[side]:
            lines.append(f"{transcript.conv_id} {side} {t.start:.3f} {t.duration:.3f} {t.token}\n")
    return "".join(lines)


# Longest first so "--" is consumed as a unit.
_TRAILING = ("--", ".", ",", "?", "!")
_LAST_CHAR_LABEL = {
    ",": PunctuationClass.COMMA,
    ".": PunctuationClass.DOT,
    "?": PunctuationClass.QUESTION,
}


def extract_label(raw: str) -> tuple[str, PunctuationClass] | None:
    """Split a raw transcript token into a clean token and its label.

    Returns None when the token is nothing but punctuation.

    >>> extract_label("Paterson.")
    ('paterson', <PunctuationClass.DOT: 2>)
    >>> extract_label("what--")
    ('what', <PunctuationClass.BLANK: 0>)
    """
    token = raw.lower()
    tail = ""
    stripped = True
    while stripped:
        stripped = False
        for p in _TRAILING:
            if token.endswith(p):
                token = token[: -len(p)]
                tail = p + tail
                stripped = True
                break
    if not token:
        return None
    if not tail or "..." in tail:
        return token, PunctuationClass.BLANK
    return token, _LAST_CHAR_LABEL.get(tail[-1], PunctuationClass.BLANK)


def parse_punct_transcript(text: str) -> PunctTranscript:
    """Parse punctuated utterances into labelled tokens per channel.

    Utterance times only order utterances within a channel; they are
    never used as word timings.
    """
    utterances: dict[str, list[tuple[float, list[PunctToken]]]] = {s: [] for s in SIDES}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split(None, 3)
        if len(parts) < 3 or parts[2] not in ("A:", "B:"):
            raise ParseError("expected '<start> <end> <A|B>: <text>'", lineno)
        start = _parse_time(parts[0], "start", lineno)
        _parse_time(parts[1], "end", lineno)
        side = parts[2][0]
        utterance = parts[3] if len(parts) == 4 else ""
        if not utterance.strip():
            log.warning("line %d: empty utterance skipped", lineno)
            continue
        tokens = []
        for raw in utterance.split():
            result = extract_label(raw)
            if result is not None:
                tokens.append(PunctToken(result[0], result[1], side))
        utterances[side].append((start, tokens))
    transcript = PunctTranscript()
    for side in SIDES:
        for _, tokens in sorted(utterances[side], key=lambda u: u[0]):
            transcript.channels[side].extend(tokens)
    return transcript


def read_ctm(path) -> TimedTranscript:
    with open(path, encoding="utf-8") as fh:
        return parse_ctm(fh.read())


def read_punct_transcript(path) -> PunctTranscript:
    with open(path, encoding="utf-8") as fh:
        return parse_punct_transcript(fh.read())
