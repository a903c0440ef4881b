import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convpunct.align import (GAP, AlignmentTooLargeError, ScoringScheme, align_transcripts,
                             build_dialogue, merge_channel, nw_align)
from convpunct.dialogue import PunctuationClass as P, Word, format_dialogue
from convpunct.ingest import PunctToken, TimedToken, read_ctm, read_punct_transcript

from conftest import FIXTURE_IDS
from oracles import alignment_pairs_score, brute_force_alignment_score


def timed(*tokens, side="A"):
    return [TimedToken(t, side, float(i), 0.1) for i, t in enumerate(tokens)]


def punct(*pairs, side="A"):
    return [PunctToken(t, label, side) for t, label in pairs]


def test_identical():
    r = nw_align(["i", "know"], ["i", "know"])
    assert r.pairs == [(0, 0), (1, 1)] and r.score == 2


def test_insertion_in_right():
    r = nw_align(["i", "know"], ["i", "do", "know"])
    assert r.pairs == [(0, 0), (GAP, 1), (1, 2)] and r.score == 1


def test_empty_left():
    r = nw_align([], ["a", "b"])
    assert r.pairs == [(GAP, 0), (GAP, 1)] and r.score == -2


def test_both_empty():
    r = nw_align([], [])
    assert r.pairs == [] and r.score == 0


def test_tie_break_prefers_diagonal_then_left_gap():
    # "i i heard" vs "i heard": both i's could pair; traceback pairs the later one.
    r = nw_align(["i", "i", "heard"], ["i", "heard"])
    assert r.score == 1
    assert r.pairs == [(0, GAP), (1, 0), (2, 1)]


def test_scheme_validation():
    with pytest.raises(ValueError):
        ScoringScheme(match=0, mismatch=0, gap=-1)


def test_cell_budget():
    with pytest.raises(AlignmentTooLargeError):
        nw_align(["a"] * 100, ["a"] * 100, max_cells=1000)


tokens = st.lists(st.sampled_from("abcde"), max_size=7)


@settings(max_examples=300, deadline=None)
@given(tokens, tokens)
def test_score_matches_brute_force(left, right):
    r = nw_align(left, right)
    assert r.score == brute_force_alignment_score(left, right)


@settings(max_examples=200, deadline=None)
@given(tokens, tokens, st.integers(-3, 0), st.integers(-3, 0))
def test_pairs_are_a_valid_alignment_achieving_the_score(left, right, mismatch, gap):
    scheme = ScoringScheme(1, mismatch, gap)
    r = nw_align(left, right, scheme)
    assert [a for a, _ in r.pairs if a is not GAP] == list(range(len(left)))
    assert [b for _, b in r.pairs if b is not GAP] == list(range(len(right)))
    assert all(p != (GAP, GAP) for p in r.pairs)
    assert alignment_pairs_score(r.pairs, left, right, 1, mismatch, gap) == r.score
    assert r.score == brute_force_alignment_score(left, right, 1, mismatch, gap)


@given(tokens)
def test_self_alignment_is_all_matches(seq):
    r = nw_align(seq, seq)
    assert r.pairs == [(i, i) for i in range(len(seq))]
    assert r.score == len(seq)


def test_merge_perfect_match():
    words = merge_channel(timed("oh", "okay"), punct(("oh", P.COMMA), ("okay", P.DOT)))
    assert [(w.text, w.label) for w in words] == [("oh", P.COMMA), ("okay", P.DOT)]


def test_merge_drops_extra_timed_word():
    words = merge_channel(timed("i", "i", "heard"), punct(("i", P.BLANK), ("heard", P.BLANK)))
    assert [w.text for w in words] == ["i", "heard"]
    assert words[0].start == 1.0  # the second "i" keeps its time


def test_merge_drops_mismatched_pair():
    assert merge_channel(timed("peterson"), punct(("paterson", P.DOT))) == []


def test_merge_is_case_insensitive():
    (w,) = merge_channel(timed("Okay"), punct(("okay", P.DOT)))
    assert (w.text, w.start, w.label) == ("okay", 0.0, P.DOT)


def test_build_dialogue_interleaves():
    a = [Word("hi", "A", 0.0, 0.1, P.BLANK), Word("so", "A", 0.2, 0.1, P.BLANK)]
    b = [Word("yes", "B", 0.5, 0.1, P.BLANK)]
    assert [w.text for w in build_dialogue("d", a, b).words] == ["hi", "so", "yes"]
    assert list(build_dialogue("d", a, []).words) == a


@pytest.mark.parametrize("fx", FIXTURE_IDS)
def test_fixture_golden(fixture_dir, fx):
    d, stats = align_transcripts(read_ctm(fixture_dir / f"{fx}.ctm"),
                                 read_punct_transcript(fixture_dir / f"{fx}.txo"))
    assert format_dialogue(d) == (fixture_dir / f"{fx}.tsv").read_text()
    golden = dict(line.split("\t") for line in (fixture_dir / "stats.txt").read_text().splitlines()
                  if line and not line.startswith("#"))
    assert stats.format() == golden[fx]
