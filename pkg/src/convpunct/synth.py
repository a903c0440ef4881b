"""Synthetic two-channel labelled dialogues with known punctuation rules.

Rules, applied per sentence:

* the length is geometric with mean ``mean_sentence_length``, capped at
  ``max_sentence_length`` (the default cap of 16 keeps every sentence
  inside the CNN's 19-word left context);
* a sentence opened by a question trigger ends in ``?``, otherwise ``.``;
* a statement may open with a discourse marker (``yeah``, ``well``, ...);
* the word before a mid-sentence conjunction takes ``,`` with
  probability ``comma_prob``;
* pauses between sentences are drawn from a wider, later distribution
  than pauses between words of one sentence, so timing features carry
  the sentence boundaries.

Speakers alternate turns of one or more sentences; with probability
``overlap_prob`` a turn starts before the previous one has finished.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np

from .dialogue import Dialogue, PunctuationClass, Word, sort_words

QUESTION_TRIGGERS = ("what", "where", "who", "how", "why")
CONJUNCTIONS = ("and", "but", "so", "because")
OPENERS = ("yeah", "well", "okay", "oh")
FILLERS = ("um", "uh", "[laughter]", "[noise]")


def fixture_embeddings_path():
    return resources.files("convpunct") / "data" / "fixture_embeddings.txt"


def fixture_vocabulary() -> list[str]:
    with fixture_embeddings_path().open(encoding="utf-8") as fh:
        return [line.split(" ", 1)[0] for line in fh if line.strip()]


@dataclass(frozen=True)
class SynthConfig:
    vocab_size: int | None = None
    mean_sentence_length: float = 8.0
    max_sentence_length: int = 16
    mean_sentences_per_turn: float = 1.5
    question_prob: float = 0.15
    question_triggers: tuple[str, ...] = QUESTION_TRIGGERS
    conjunctions: tuple[str, ...] = CONJUNCTIONS
    openers: tuple[str, ...] = OPENERS
    opener_prob: float = 0.8
    conjunction_prob: float = 0.15
    comma_prob: float = 0.85
    filler_prob: float = 0.02
    inter_gap: tuple[float, float] = (0.8, 0.2)
    intra_gap: tuple[float, float] = (0.15, 0.05)
    duration: tuple[float, float] = (0.3, 0.1)
    min_duration: float = 0.02
    overlap_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("question_prob", "conjunction_prob", "comma_prob", "filler_prob", "overlap_prob",
                     "opener_prob"):
            p = getattr(self, name)
            if not 0 <= p <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        means = (self.mean_sentence_length, self.mean_sentences_per_turn,
                 self.inter_gap[0], self.intra_gap[0], self.duration[0])
        if min(means) <= 0:
            raise ValueError("means must be positive")
        if self.mean_sentence_length < 1 or self.mean_sentences_per_turn < 1:
            raise ValueError("mean lengths must be at least 1")
        if self.max_sentence_length < 1:
            raise ValueError("max_sentence_length must be positive")


@dataclass(frozen=True)
class TraceEntry:
    """Why a generated word carries its label."""

    sentence: int
    position: int
    length: int
    question: bool
    comma: bool

    def label(self) -> PunctuationClass:
        if self.position == self.length - 1:
            return PunctuationClass.QUESTION if self.question else PunctuationClass.DOT
        return PunctuationClass.COMMA if self.comma else PunctuationClass.BLANK


@dataclass
class SynthCorpus:
    dialogues: list[Dialogue]
    traces: dict[str, list[TraceEntry]] = field(default_factory=dict)


def _normal(rng, params, low=0.0):
    return max(low, rng.normal(*params))


def _content_vocabulary(config: SynthConfig, vocabulary: Sequence[str]) -> list[str]:
    reserved = set(config.question_triggers) | set(config.conjunctions) | set(config.openers)
    words = [w for w in vocabulary if w not in reserved]
    if config.vocab_size is not None:
        words = words[:config.vocab_size]
    if not words:
        raise ValueError("no content words left after removing triggers and conjunctions")
    return words


def _sentence(rng, config, length, content, zipf) -> tuple[list[str], bool, list[bool]]:
    question = bool(config.question_triggers) and rng.random() < config.question_prob
    picks = rng.choice(len(content), size=length, p=zipf)
    fillers = rng.random(length) < config.filler_prob
    tokens = [FILLERS[rng.integers(len(FILLERS))] if f else content[k]
              for k, f in zip(picks, fillers)]
    if question:
        tokens[0] = config.question_triggers[rng.integers(len(config.question_triggers))]
    elif config.openers and rng.random() < config.opener_prob:
        tokens[0] = config.openers[rng.integers(len(config.openers))]
    commas = [False] * length
    if config.conjunctions:
        for j in range(1, length - 1):
            if tokens[j - 1] in config.conjunctions:
                continue
            if rng.random() < config.conjunction_prob:
                tokens[j] = config.conjunctions[rng.integers(len(config.conjunctions))]
                commas[j - 1] = rng.random() < config.comma_prob
    return tokens, question, commas


def generate_dialogue(conv_id: str, config: SynthConfig, n_words: int, rng: np.random.Generator,
                      vocabulary: Sequence[str]) -> tuple[Dialogue, list[TraceEntry]]:
    content = _content_vocabulary(config, vocabulary)
    zipf = 1.0 / np.arange(1, len(content) + 1)
    zipf /= zipf.sum()
    p_len = 1.0 / config.mean_sentence_length
    p_turn = 1.0 / config.mean_sentences_per_turn

    entries: list[tuple[Word, TraceEntry]] = []
    clock = {"A": 0.0, "B": 0.0}
    side = "A" if rng.random() < 0.5 else "B"
    turn_end = 0.0
    remaining = n_words
    sentence_id = 0
    first_turn = True
    while remaining > 0:
        if first_turn:
            t = _normal(rng, config.intra_gap)
            first_turn = False
        elif rng.random() < config.overlap_prob:
            t = max(turn_end - rng.uniform(0.2, 1.0), clock[side])
        else:
            t = max(turn_end + _normal(rng, config.inter_gap), clock[side])
        n_sentences = int(rng.geometric(p_turn))
        for s in range(n_sentences):
            if remaining == 0:
                break
            if s > 0:
                t += _normal(rng, config.inter_gap)
            length = min(int(rng.geometric(p_len)), config.max_sentence_length, remaining)
            tokens, question, commas = _sentence(rng, config, length, content, zipf)
            for j, tok in enumerate(tokens):
                if j > 0:
                    t += _normal(rng, config.intra_gap)
                dur = _normal(rng, config.duration, config.min_duration)
                trace = TraceEntry(sentence_id, j, length, question, commas[j])
                entries.append((Word(tok, side, round(t, 3), round(dur, 3), trace.label()), trace))
                t += dur
            sentence_id += 1
            remaining -= length
        clock[side] = t
        turn_end = max(turn_end, t)
        side = "B" if side == "A" else "A"

    trace_of = {id(w): tr for w, tr in entries}
    words = sort_words(w for w, _ in entries)
    return Dialogue(conv_id, tuple(words)), [trace_of[id(w)] for w in words]


def generate(config: SynthConfig = SynthConfig(), n_conversations: int = 1,
             words_per_conversation: int = 500,
             vocabulary: Sequence[str] | None = None) -> SynthCorpus:
    """Generate labelled dialogues plus, per dialogue, one trace entry per word.

    Each conversation draws from its own generator seeded by
    ``(config.seed, index)``, so conversation ``i`` does not depend on how
    many others are generated.
    """
    if n_conversations < 1:
        raise ValueError("n_conversations must be at least 1")
    vocabulary = list(vocabulary) if vocabulary is not None else fixture_vocabulary()
    corpus = SynthCorpus([])
    for i in range(n_conversations):
        rng = np.random.default_rng([config.seed, i])
        conv_id = f"synth{i:04d}"
        dialogue, trace = generate_dialogue(conv_id, config, words_per_conversation, rng, vocabulary)
        corpus.dialogues.append(dialogue)
        corpus.traces[conv_id] = trace
    return corpus


def format_trace(corpus: SynthCorpus) -> str:
    """Tab-separated ``id index sentence position length kind comma`` lines."""
    lines = ["# id\tindex\tsentence\tposition\tlength\tkind\tcomma\n"]
    for d in corpus.dialogues:
        for i, e in enumerate(corpus.traces[d.id]):
            kind = "question" if e.question else "statement"
            lines.append(f"{d.id}\t{i}\t{e.sentence}\t{e.position}\t{e.length}\t{kind}\t{int(e.comma)}\n")
    return "".join(lines)


def parse_trace(text: str) -> dict[str, list[TraceEntry]]:
    traces: dict[str, list[TraceEntry]] = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        conv, _, sentence, position, length, kind, comma = line.split("\t")
        traces.setdefault(conv, []).append(
            TraceEntry(int(sentence), int(position), int(length), kind == "question", comma == "1"))
    return traces
