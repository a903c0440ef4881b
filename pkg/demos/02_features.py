#!/usr/bin/env python3
"""What the network actually sees: a T x 303 matrix per conversation.

300 embedding columns, a side flag, and two per-speaker z-scored timing
columns (interval since the same speaker's previous word start, and the
word's duration).
"""

import numpy as np

from convpunct.dialogue import PunctuationClass
from convpunct.features import (featurize, frequency_ranking, read_embeddings,
                                time_features)
from convpunct.synth import SynthConfig, fixture_embeddings_path, generate

np.set_printoptions(precision=3, suppress=True)

corpus = generate(SynthConfig(seed=5), n_conversations=4, words_per_conversation=300)
d = corpus.dialogues[0]
table = read_embeddings(fixture_embeddings_path(), frequency_ranking(corpus.dialogues))
print(f"vocabulary: {len(table)} tokens with vectors, dim {table.dim}")

fm = featurize(d, table)
print("feature matrix", fm.rows.shape, fm.rows.dtype)

raw = time_features(d)
print("\nfirst 12 words: text side raw_interval z_interval label")
for w, r, row in list(zip(d.words, raw, fm.rows))[:12]:
    print(f"  {w.text:>10} {w.side} {r[0]:7.3f} {row[301]:7.3f}  {w.label.symbol}")

# Pauses before the next word are what separate sentences
labels = np.array([int(w.label) for w in d.words])
for side in "AB":
    idx = np.array([i for i, w in enumerate(d.words) if w.side == side])
    nxt = raw[idx[1:], 0]
    ends = np.isin(labels[idx[:-1]], [PunctuationClass.DOT, PunctuationClass.QUESTION])
    print(f"\nside {side}: median next interval after sentence end {np.median(nxt[ends]):.2f}s,"
          f" elsewhere {np.median(nxt[~ends]):.2f}s")
