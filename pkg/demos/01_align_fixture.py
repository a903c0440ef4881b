#!/usr/bin/env python3
"""Walk one bundled conversation from raw transcripts to a labelled dialogue.

The CTM file gives every recognised word a start time and a duration but
no punctuation; the punctuated transcript has the punctuation but only
utterance-level times. Aligning the two per channel moves the labels onto
the timed words.
"""

from importlib import resources

from convpunct.align import align_transcripts, nw_align
from convpunct.dialogue import class_histogram
from convpunct.evaluation import render_turns
from convpunct.ingest import read_ctm, read_punct_transcript

fixtures = resources.files("convpunct") / "data" / "fixtures"

timed = read_ctm(fixtures / "fx001.ctm")
punct = read_punct_transcript(fixtures / "fx001.txo")

print("timed A:", " ".join(t.token for t in timed["A"]))
print("punct A:", " ".join(t.token + t.label.symbol.replace("_", "") for t in punct["A"]))

# The alignment itself, channel A
left = [t.token for t in timed["A"]]
right = [t.token for t in punct["A"]]
result = nw_align(left, right)
print("\nscore", result.score)
for i, j in result.pairs:
    a = left[i] if i is not None else "-"
    b = right[j] if j is not None else "-"
    flag = "" if a == b else "   <- dropped"
    print(f"  {a:>12}  {b:<12}{flag}")

dialogue, stats = align_transcripts(timed, punct)
print("\n" + stats.format())
print(class_histogram([dialogue]).format())

# Render the reference labels back as text; capitals only follow a dot
print()
print(render_turns(dialogue, dialogue.labels()))
