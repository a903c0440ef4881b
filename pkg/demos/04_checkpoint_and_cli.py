#!/usr/bin/env python3
"""Checkpoint round trip and the command-line pipeline end to end."""

import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from convpunct.models import (ModelConfig, PunctuationModel, load_checkpoint,
                              save_checkpoint)
from convpunct.synth import fixture_embeddings_path

tmp = Path(tempfile.mkdtemp())

model = PunctuationModel(ModelConfig(arch="blstm", hidden=16, blstm_layers=2), seed=1)
save_checkpoint(model, tmp / "m.pnct")
again = load_checkpoint(tmp / "m.pnct")
x = np.random.default_rng(0).normal(size=(50, 303)).astype(np.float32)
print("bytes:", (tmp / "m.pnct").stat().st_size,
      " identical predictions:", np.array_equal(model.forward(x), again.forward(x)))

(tmp / "exp.cfg").write_text(
    "# small experiment\narch = cnn\nfilters = 16\nmax_epochs = 2\nbatch_size = 4\n")


def cli(*args):
    cmd = [sys.executable, "-m", "convpunct", *map(str, args)]
    print("$ convpunct", " ".join(map(str, args)))
    done = subprocess.run(cmd, capture_output=True, text=True)
    print(done.stdout + done.stderr)
    return done.returncode


cli("synth", "--out", tmp / "c.tsv", "--conversations", 20, "--words", 200)
cli("train", "--config", tmp / "exp.cfg", "--corpus", tmp / "c.tsv",
    "--embeddings", fixture_embeddings_path(), "--checkpoint", tmp / "cnn.pnct",
    "--split-out", tmp / "split.tsv", "--strict-deterministic")
cli("eval", "--corpus", tmp / "c.tsv", "--ids", tmp / "split.tsv",
    "--checkpoint", tmp / "cnn.pnct", "--embeddings", fixture_embeddings_path())
print("exit code for a missing file:", cli("train", "--corpus", tmp / "nope.tsv",
      "--embeddings", tmp / "nope.txt", "--checkpoint", tmp / "x"))
