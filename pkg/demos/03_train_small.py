#!/usr/bin/env python3
"""Train a small CNN on a synthetic corpus and score it.

A reduced model (64 filters instead of 128) and corpus so this finishes
in about a minute; the full-size configuration is what `convpunct train`
uses.
"""

import time

from convpunct.evaluation import render_punctuated, score
from convpunct.features import frequency_ranking, read_embeddings
from convpunct.models import ModelConfig, predict_labels
from convpunct.synth import SynthConfig, fixture_embeddings_path, generate
from convpunct.training import TrainConfig, fit, split_corpus

corpus = generate(SynthConfig(seed=0), n_conversations=120, words_per_conversation=400)
by_id = {d.id: d for d in corpus.dialogues}
train_ids, val_ids, test_ids = split_corpus(list(by_id), seed=0)
train = [by_id[i] for i in train_ids]
table = read_embeddings(fixture_embeddings_path(), frequency_ranking(train))

model_cfg = ModelConfig(arch="cnn", filters=64)
train_cfg = TrainConfig(batch_size=16, stride=100, max_epochs=20, seed=0)

t0 = time.time()
model, report = fit(train_cfg, model_cfg, train, [by_id[i] for i in val_ids], table,
                    on_epoch_end=lambda e, m, tr, va: print(f"epoch {e}: train {tr:.4f}  val {va:.4f}"))
print(f"trained in {time.time() - t0:.0f}s, best epoch {report.best_epoch}")

true, pred = [], []
for i in test_ids:
    d = by_id[i]
    true += d.labels()
    pred += predict_labels(model, d, table)
scores, cm = score(true, pred)
print()
print(scores.table())
print(f"macro F1 (non-blank): {scores.macro_f1():.1f}")
print()
print(cm.table())

d = by_id[test_ids[0]]
text = render_punctuated(d, predict_labels(model, d, table))["A"]
print("\nside A, predicted:", text[:300], "...")
