"""Tiny corpora and models that keep training tests fast."""

import numpy as np

from convpunct.features import load_embeddings
from convpunct.models import ModelConfig
from convpunct.synth import SynthConfig, fixture_vocabulary, generate

TINY_DIM = 8


def tiny_table(dim=TINY_DIM, seed=0):
    rng = np.random.default_rng(seed)
    vocab = fixture_vocabulary()
    lines = [t + " " + " ".join(f"{v:.4f}" for v in rng.normal(size=dim)) for t in vocab]
    return load_embeddings(lines, vocab, dim=dim)


def tiny_model_config(arch="cnn"):
    return ModelConfig(arch=arch, input_dim=TINY_DIM + 3, filters=6, kernels=(3, 3),
                       dilations=(1, 2), hidden=4, blstm_layers=1)


def tiny_corpus(n=10, words=60, seed=0):
    return generate(SynthConfig(seed=seed), n, words).dialogues
