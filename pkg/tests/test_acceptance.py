"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run just this file with

    python3 -m pytest tests/test_acceptance.py -v

or directly (``python3 tests/test_acceptance.py``) for the summary lines
alone. The synthetic-learning criteria train 15 full-size models and take
about 40 minutes on one core; results are cached per session so criteria
5, 6 and 10 share runs.
"""

from __future__ import annotations

import random
import statistics
import sys
import time
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

sys.path.insert(0, str(Path(__file__).parent))

from convpunct import cli, nncore as nn  # noqa: E402
from convpunct.align import align_transcripts, nw_align  # noqa: E402
from convpunct.dialogue import PunctuationClass as P, class_histogram, format_dialogue, read_corpus  # noqa: E402
from convpunct.evaluation import NON_BLANK, render_punctuated, score  # noqa: E402
from convpunct.features import frequency_ranking, read_embeddings  # noqa: E402
from convpunct.ingest import read_ctm, read_punct_transcript  # noqa: E402
from convpunct.models import ModelConfig, PunctuationModel, load_checkpoint, predict_labels  # noqa: E402
from convpunct.synth import SynthConfig, fixture_embeddings_path, generate  # noqa: E402
from convpunct.training import TrainConfig, fit, split_corpus  # noqa: E402

from nets import blstm_net, cnn_net, problem, randomize_biases  # noqa: E402
from oracles import brute_force_alignment_score  # noqa: E402

FIXTURES = Path(str(resources.files("convpunct") / "data" / "fixtures"))
FIXTURE_IDS = ("fx001", "fx002", "fx003")

# Synthetic experiment protocol shared by criteria 5, 6 and 10.
CORPUS_SEED = 0
N_CONVERSATIONS, WORDS = 200, 500
SEEDS = (0, 1, 2)
TRAIN_SETTINGS = dict(batch_size=4, stride=100)
TIME_LIMIT = 15 * 60

RESULTS: dict[int, tuple[bool, str]] = {}


def record(n: int, passed: bool, detail: str) -> None:
    RESULTS[n] = (passed, detail)
    print(f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


# -- 1. alignment oracle --------------------------------------------------------

def test_criterion_01_alignment_matches_brute_force():
    rng = random.Random(2019)
    pairs = [([rng.choice("abcde") for _ in range(rng.randint(0, 8))],
              [rng.choice("abcde") for _ in range(rng.randint(0, 8))]) for _ in range(1000)]
    t0 = time.perf_counter()
    scores = [nw_align(a, b).score for a, b in pairs]
    align_time = time.perf_counter() - t0
    mismatches = sum(s != brute_force_alignment_score(a, b) for s, (a, b) in zip(scores, pairs))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 10
    record(1, ok, f"{1000 - mismatches}/1000 exact, {elapsed:.1f}s total ({align_time:.2f}s aligning)")
    assert ok


# -- 2. gradient checks ----------------------------------------------------------

def test_criterion_02_gradient_checks():
    t0 = time.perf_counter()
    errors = {}
    rng = np.random.default_rng(7)
    dense = nn.Sequential([nn.Dense("softmax", 60, 4, decay=0.0, rng=rng, dtype=np.float64)])
    cnn = cnn_net(rng)
    blstm = blstm_net(rng)
    for name, net, C in (("dense_softmax", dense, 60), ("cnn", cnn, 5), ("blstm", blstm, 5)):
        randomize_biases(net, rng)
        assert sum(p.value.size for p in net.params) >= 200
        x, labels, mask = problem(rng, C=C)
        errors[name] = nn.grad_check(net, x, labels, mask, samples=200, rng=rng)
    elapsed = time.perf_counter() - t0
    ok = max(errors.values()) < 1e-4 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errors.items())
    record(2, ok, f"max rel err {detail}; {elapsed:.1f}s")
    assert ok


# -- 3. architecture conformance ------------------------------------------------

def _influence_span(model: PunctuationModel, T: int = 120, at: int = 60) -> tuple[int, int]:
    rng = np.random.default_rng(0)
    x = rng.normal(size=(T, model.config.input_dim))
    base = model.logits(x)
    bumped = x.copy()
    bumped[at] += 1.0
    changed = np.flatnonzero(np.any(model.logits(bumped) != base, axis=1))
    # an input at `at` reaches output s when s - left <= at <= s + right
    return int(changed.max() - at), int(at - changed.min())


def test_criterion_03_architecture():
    cfg = ModelConfig()
    model = PunctuationModel(cfg, seed=0, dtype=np.float64)
    measured = _influence_span(model)
    closed_form = cfg.receptive_field()
    lengths_ok = all(
        nn.conv1d_same(np.ones((T, 2)), np.ones((k, 2, 3)), np.zeros(3), d).shape == (T, 3)
        for k, d in zip(cfg.kernels, cfg.dilations) for T in (1, 7, 200))
    rng = np.random.default_rng(1)
    sums_ok = True
    worst = 0.0
    for arch in ("cnn", "blstm"):
        probs = PunctuationModel(ModelConfig(arch=arch), seed=2).forward(
            rng.normal(size=(2, 50, 303)).astype(np.float32))
        dev = float(np.abs(probs.sum(axis=-1) - 1).max())
        worst = max(worst, dev)
        sums_ok &= dev <= 1e-6
    ok = measured == closed_form == (19, 18) and lengths_ok and sums_ok
    record(3, ok, f"receptive field measured {measured} closed-form {closed_form}; "
                  f"lengths preserved {lengths_ok}; max |row sum - 1| {worst:.1e}")
    assert ok


# -- 4. fixture goldens -------------------------------------------------------------

def test_criterion_04_fixture_goldens():
    matches = 0
    dialogues = []
    for fx in FIXTURE_IDS:
        d, _ = align_transcripts(read_ctm(FIXTURES / f"{fx}.ctm"), read_punct_transcript(FIXTURES / f"{fx}.txo"))
        matches += format_dialogue(d) == (FIXTURES / f"{fx}.tsv").read_text()
        dialogues.append(d)
    golden = {}
    for line in (FIXTURES / "histogram.txt").read_text().splitlines():
        if line and not line.startswith("#"):
            name, count = line.split("\t")
            golden[P[name.upper()]] = int(count)
    hist = class_histogram(dialogues).counts
    ok = matches == len(FIXTURE_IDS) and hist == golden
    record(4, ok, f"{matches}/{len(FIXTURE_IDS)} goldens byte-identical; histogram "
                  f"{[hist[c] for c in P]} vs golden {[golden[c] for c in P]}")
    assert ok


# -- synthetic experiments (5, 6, 10) ----------------------------------------------

@lru_cache(maxsize=1)
def synthetic_setup():
    corpus = generate(SynthConfig(seed=CORPUS_SEED), N_CONVERSATIONS, WORDS)
    by_id = {d.id: d for d in corpus.dialogues}
    train_ids, val_ids, test_ids = split_corpus(list(by_id), seed=CORPUS_SEED)
    train = [by_id[i] for i in train_ids]
    table = read_embeddings(fixture_embeddings_path(), frequency_ranking(train))
    return train, [by_id[i] for i in val_ids], [by_id[i] for i in test_ids], table


def synthetic_run(arch: str, use_time: bool = True, class_weighting: bool = False, seed: int = 0):
    """Train on the synthetic corpus and score the test split (cached per session)."""
    return _synthetic_run(arch, use_time, class_weighting, seed)


@lru_cache(maxsize=None)
def _synthetic_run(arch: str, use_time: bool, class_weighting: bool, seed: int):
    train, val, test, table = synthetic_setup()
    config = TrainConfig(seed=seed, use_time=use_time, class_weighting=class_weighting, **TRAIN_SETTINGS)
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        model, report = fit(config, ModelConfig(arch=arch), train, val, table)
    elapsed = time.perf_counter() - t0
    true, pred = [], []
    for d in test:
        true += [int(x) for x in d.labels()]
        pred += [int(x) for x in predict_labels(model, d, table, use_time)]
    scores, _ = score(true, pred)
    print(f"  [{arch} time={int(use_time)} cw={int(class_weighting)} seed={seed}] "
          f"{elapsed:.0f}s, {report.stopping_epoch} epochs, macro-F1 {scores.macro_f1():.1f}, "
          f"F1 {np.round(scores.f1, 1).tolist()}")
    return scores, elapsed, report


@pytest.mark.slow
def test_criterion_05_synthetic_learning():
    parts, ok = [], True
    for arch in ("cnn", "blstm"):
        scores, elapsed, _ = synthetic_run(arch)
        macro = scores.macro_f1() / 100
        ok &= macro >= 0.80 and elapsed < TIME_LIMIT
        parts.append(f"{arch} macro-F1 {macro:.3f} in {elapsed / 60:.1f} min")
    record(5, ok, "; ".join(parts) + " (need >= 0.80, < 15 min)")
    assert ok


@pytest.mark.slow
def test_criterion_06_time_feature_ablation():
    parts, ok = [], True
    for arch in ("cnn", "blstm"):
        with_t = [synthetic_run(arch, True, False, s)[0].f1[P.DOT] for s in SEEDS]
        without = [synthetic_run(arch, False, False, s)[0].f1[P.DOT] for s in SEEDS]
        gain = statistics.median(with_t) - statistics.median(without)
        ok &= gain >= 2.0
        parts.append(f"{arch} dot F1 +T {statistics.median(with_t):.1f} vs -T "
                     f"{statistics.median(without):.1f} (gain {gain:+.1f})")
    record(6, ok, "; ".join(parts) + " (need gain >= 2)")
    assert ok


# -- 7. determinism ------------------------------------------------------------------

def test_criterion_07_determinism(tmp_path):
    corpus = tmp_path / "corpus.tsv"
    assert cli.run(["synth", "--out", str(corpus), "--conversations", "20", "--words", "300"]) == 0
    config = tmp_path / "exp.cfg"
    config.write_text("arch = cnn\nmax_epochs = 2\nbatch_size = 8\nseed = 3\n")
    ckpts = []
    for run in ("a", "b"):
        ckpt = tmp_path / f"{run}.pnct"
        code = cli.run(["train", "--config", str(config), "--corpus", str(corpus),
                        "--embeddings", str(fixture_embeddings_path()), "--checkpoint", str(ckpt),
                        "--strict-deterministic"])
        assert code == 0
        ckpts.append(ckpt.read_bytes())
    identical = ckpts[0] == ckpts[1]

    # round trip through the file preserves predictions exactly
    dialogues = read_corpus(corpus)
    table = read_embeddings(fixture_embeddings_path(), (tmp_path / "a.pnct.vocab").read_text().split())
    trained, _ = fit(TrainConfig(max_epochs=1, batch_size=8, seed=3), ModelConfig(arch="blstm", hidden=32),
                     dialogues[:16], dialogues[16:18], table, checkpoint_path=tmp_path / "rt.pnct")
    loaded = load_checkpoint(tmp_path / "rt.pnct")
    same = all(predict_labels(trained, d, table) == predict_labels(loaded, d, table) for d in dialogues[18:])
    probs_equal = all(np.array_equal(trained.params[k], loaded.params[k]) for k in trained.params)
    ok = identical and same and probs_equal
    record(7, ok, f"checkpoints bitwise identical: {identical} ({len(ckpts[0])} bytes); "
                  f"round-trip predictions identical: {same}")
    assert ok


# -- 8. early stopping ---------------------------------------------------------------

def test_criterion_08_early_stopping():
    from helpers import tiny_corpus, tiny_model_config, tiny_table

    corpus = tiny_corpus(10, 80)
    script = [1.0, 0.8, 0.6, 0.7, 0.65, 0.1, 0.05]
    losses = iter(script)
    snapshots = {}

    def remember(epoch, model, train_loss, val_loss):
        snapshots[epoch] = {k: v.copy() for k, v in model.params.items()}

    model, report = fit(TrainConfig(patience=2, batch_size=4, window=40, max_epochs=20),
                        tiny_model_config(), corpus[:8], corpus[8:], tiny_table(),
                        on_epoch_end=remember, validate=lambda m, w: next(losses))
    restored = all(np.array_equal(v, snapshots[3][k]) for k, v in model.params.items())
    moved = any(not np.array_equal(snapshots[3][k], snapshots[5][k]) for k in snapshots[3])
    ok = report.stopping_epoch == 5 and report.best_epoch == 3 and restored and moved
    record(8, ok, f"losses {script[:5]} -> stopped at epoch {report.stopping_epoch} (expected 5), "
                  f"best epoch {report.best_epoch} (expected 3), best weights restored: {restored}")
    assert ok


# -- 9. rendering ----------------------------------------------------------------------

def test_criterion_09_rendering():
    checked = violations = 0
    for fx in FIXTURE_IDS:
        (d,) = read_corpus(FIXTURES / f"{fx}.tsv")
        rendered = render_punctuated(d, d.labels())
        for side in "AB":
            words = [w for w in d.words if w.side == side]
            tokens = rendered[side].split(" ") if words else []
            pending = True
            for w, token in zip(words, tokens):
                if not w.text.startswith("["):
                    checked += 1
                    violations += token[:1].isupper() != pending
                    pending = False
                if w.label == P.DOT:
                    pending = True
    # the worked example: capitals after dots, none after commas or question marks
    from convpunct.dialogue import Dialogue, Word
    sample = Dialogue("s", tuple(Word(t, "A", float(i), 0.1) for i, t in enumerate(
        ["oh", "okay", "okay", "why", "not", "sure"])))
    text = render_punctuated(sample, [P.COMMA, P.DOT, P.DOT, P.BLANK, P.QUESTION, P.BLANK])["A"]
    ok = violations == 0 and checked > 0 and text == "Oh, okay. Okay. Why not? sure"
    record(9, ok, f"{checked} fixture words checked, {violations} capitalization violations; sample {text!r}")
    assert ok


# -- 10. class weighting ------------------------------------------------------------

@pytest.mark.slow
def test_criterion_10_class_weighting():
    base = [synthetic_run("cnn", True, False, s)[0] for s in SEEDS]
    weighted = [synthetic_run("cnn", True, True, s)[0] for s in SEEDS]
    r0 = statistics.median(s.macro_recall(NON_BLANK) for s in base)
    r1 = statistics.median(s.macro_recall(NON_BLANK) for s in weighted)
    p0 = statistics.median(s.macro_precision(NON_BLANK) for s in base)
    p1 = statistics.median(s.macro_precision(NON_BLANK) for s in weighted)
    ok = r1 > r0 and p1 < p0
    record(10, ok, f"non-blank recall {r0:.1f} -> {r1:.1f}, precision {p0:.1f} -> {p1:.1f} "
                   f"(median over seeds {SEEDS})")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
