"""Command-line entry point: align, prepare, synth, train, predict, eval.

Exit codes: 0 success, 1 usage error, 2 data or format error,
3 numerical failure. Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import errno
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .align import ScoringScheme, align_transcripts
from .config import coerce, format_config, parse_bool, read_config
from .dialogue import Dialogue, Word, class_histogram, format_dialogue, read_corpus, write_corpus
from .errors import ConfigError, DataError, NumericalError
from .evaluation import render_turns, score
from .features import DEFAULT_VOCAB_SIZE, featurize, frequency_ranking, read_embeddings
from .ingest import read_ctm, read_punct_transcript
from .models import ModelConfig, load_checkpoint, predict_labels
from .synth import SynthConfig, format_trace, generate
from .training import TrainConfig, fit, split_corpus

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

PATH_KEYS = {"embeddings", "corpus", "checkpoint", "log", "out", "vocab_size"}
TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)}

log = logging.getLogger("convpunct")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _fail(kind: str, message: str, code: int, **extra) -> int:
    payload = {"error": kind, "message": message, "exit": code, **extra}
    print(json.dumps(payload), file=sys.stderr)
    return code


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise _missing(f"{what} not found: {p}", p)
    return p


def _missing(message: str, path) -> FileNotFoundError:
    return FileNotFoundError(errno.ENOENT, message, str(path))


@contextlib.contextmanager
def _strict(enabled: bool):
    """Pin BLAS to one thread so floating-point reductions are reproducible."""
    if not enabled:
        yield
        return
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=1):
        yield


# -- subcommands -------------------------------------------------------------

def cmd_align(args) -> int:
    scheme = ScoringScheme(args.match, args.mismatch, args.gap)
    timed = read_ctm(_require(args.ctm, "CTM file"))
    punct = read_punct_transcript(_require(args.punct, "punctuated transcript"))
    dialogue, stats = align_transcripts(timed, punct, scheme, args.id)
    text = format_dialogue(dialogue)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(stats.format(), file=sys.stderr)
    return EXIT_OK


def _pairs(ctm_dir: Path, punct_dir: Path, suffix: str):
    for ctm in sorted(ctm_dir.glob("*.ctm")):
        punct = punct_dir / (ctm.stem + suffix)
        if not punct.exists():
            raise _missing(f"no punctuated transcript for {ctm.name}: {punct}", punct)
        yield ctm, punct


def cmd_prepare(args) -> int:
    scheme = ScoringScheme(args.match, args.mismatch, args.gap)
    ctm_dir = _require(args.ctm_dir, "CTM directory")
    punct_dir = _require(args.punct_dir, "punctuated transcript directory")
    dialogues = []
    for ctm, punct in _pairs(ctm_dir, punct_dir, args.punct_suffix):
        d, stats = align_transcripts(read_ctm(ctm), read_punct_transcript(punct), scheme)
        print(f"{d.id}\t{stats.format()}", file=sys.stderr)
        dialogues.append(d)
    if not dialogues:
        raise DataError(f"no *.ctm files in {ctm_dir}")
    write_corpus(args.out, dialogues)
    if args.features:
        if not args.embeddings:
            raise ConfigError("--features needs --embeddings")
        table = read_embeddings(_require(args.embeddings, "embeddings file"),
                                frequency_ranking(dialogues), args.vocab_size)
        arrays = {}
        for d in dialogues:
            fm = featurize(d, table, not args.no_time_features)
            arrays[f"{d.id}/rows"] = fm.rows
            arrays[f"{d.id}/labels"] = np.array([int(w.label) for w in d.words], dtype=np.int8)
        np.savez_compressed(args.features, **arrays)
    print(class_histogram(dialogues).format(), file=sys.stderr)
    return EXIT_OK


def cmd_synth(args) -> int:
    corpus = generate(SynthConfig(seed=args.seed), args.conversations, args.words)
    write_corpus(args.out, corpus.dialogues)
    if args.trace:
        Path(args.trace).write_text(format_trace(corpus), encoding="utf-8")
    print(class_histogram(corpus.dialogues).format(), file=sys.stderr)
    return EXIT_OK


def _settings(args, flags: dict) -> dict[str, str]:
    """Config file values overridden by explicit command-line flags."""
    values = read_config(_require(args.config, "config file")) if args.config else {}
    unknown = set(values) - TRAIN_KEYS - MODEL_KEYS - PATH_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, value in flags.items():
        if value is not None:
            values[key] = str(value)
    return values


def _meta_path(checkpoint) -> Path:
    return Path(str(checkpoint) + ".meta")


def _vocab_path(checkpoint) -> Path:
    return Path(str(checkpoint) + ".vocab")


def cmd_train(args) -> int:
    values = _settings(args, {
        "corpus": args.corpus, "embeddings": args.embeddings, "checkpoint": args.checkpoint,
        "log": args.log, "arch": args.arch, "seed": args.seed, "batch_size": args.batch_size,
        "window": args.window, "max_epochs": args.max_epochs, "patience": args.patience,
        "lr": args.lr, "vocab_size": args.vocab_size,
        "use_time": False if args.no_time_features else None,
        "class_weighting": True if args.class_weighting else None,
    })
    for key in ("corpus", "embeddings", "checkpoint"):
        if key not in values:
            raise UsageError(f"train: missing required setting {key!r}")
    corpus_path = _require(values["corpus"], "corpus")
    embeddings_path = _require(values["embeddings"], "embeddings file")
    train_cfg = TrainConfig(**coerce(TrainConfig, {k: v for k, v in values.items() if k in TRAIN_KEYS}))
    model_cfg = ModelConfig(**coerce(ModelConfig, {k: v for k, v in values.items() if k in MODEL_KEYS}))
    vocab_size = int(values.get("vocab_size", DEFAULT_VOCAB_SIZE))

    dialogues = {d.id: d for d in read_corpus(corpus_path)}
    train_ids, val_ids, test_ids = split_corpus(list(dialogues), train_cfg.ratios, train_cfg.seed)
    train = [dialogues[i] for i in train_ids]
    table = read_embeddings(embeddings_path, frequency_ranking(train), vocab_size)

    log_fh = open(values["log"], "w", encoding="utf-8") if "log" in values else None

    def on_epoch_end(epoch, model, train_loss, val_loss):
        line = f"{epoch}\t{train_loss:.6f}\t{val_loss:.6f}\n"
        if log_fh:
            log_fh.write(line)
            log_fh.flush()
        print(line, end="", file=sys.stderr)

    try:
        with _strict(args.strict_deterministic):
            _, report = fit(train_cfg, model_cfg, train, [dialogues[i] for i in val_ids], table,
                            values["checkpoint"], on_epoch_end)
    finally:
        if log_fh:
            log_fh.close()
    ckpt = values["checkpoint"]
    _vocab_path(ckpt).write_text("".join(t + "\n" for t in sorted(table.vocab, key=table.vocab.get)),
                                 encoding="utf-8")
    _meta_path(ckpt).write_text(format_config({
        "use_time": train_cfg.use_time, "per_speaker": train_cfg.per_speaker,
        "best_epoch": report.best_epoch, "stopping_epoch": report.stopping_epoch,
    }), encoding="utf-8")
    if args.split_out:
        rows = [(i, "train") for i in train_ids] + [(i, "validation") for i in val_ids] + \
               [(i, "test") for i in test_ids]
        Path(args.split_out).write_text("".join(f"{i}\t{s}\n" for i, s in rows), encoding="utf-8")
    return EXIT_OK


def _load_predictor(checkpoint, embeddings):
    model = load_checkpoint(_require(checkpoint, "checkpoint"))
    vocab_file = _require(_vocab_path(checkpoint), "checkpoint vocabulary")
    meta_file = _meta_path(checkpoint)
    meta = read_config(meta_file) if meta_file.exists() else {}
    vocab = vocab_file.read_text(encoding="utf-8").split()
    table = read_embeddings(_require(embeddings, "embeddings file"), vocab, len(vocab))
    use_time = parse_bool(meta.get("use_time", "true"))
    per_speaker = parse_bool(meta.get("per_speaker", "true"))
    return model, table, use_time, per_speaker


def _select(dialogues, ids_file):
    if not ids_file:
        return dialogues
    lines = [line.split("\t") for line in _require(ids_file, "id list").read_text().splitlines()
             if line.strip()]
    wanted = {parts[0] for parts in lines if len(parts) == 1 or parts[1] == "test"}
    return [d for d in dialogues if d.id in wanted]


def _predict(dialogues, model, table, use_time, per_speaker) -> list[Dialogue]:
    out = []
    for d in dialogues:
        labels = predict_labels(model, d, table, use_time, per_speaker)
        words = [Word(w.text, w.side, w.start, w.duration, lab) for w, lab in zip(d.words, labels)]
        out.append(Dialogue(d.id, tuple(words)))
    return out


def cmd_predict(args) -> int:
    model, table, use_time, per_speaker = _load_predictor(args.checkpoint, args.embeddings)
    dialogues = _select(read_corpus(_require(args.corpus, "corpus")), args.ids)
    predicted = _predict(dialogues, model, table, use_time, per_speaker)
    write_corpus(args.out, predicted) if args.out else sys.stdout.write(
        "".join(format_dialogue(d) for d in predicted))
    if args.render:
        Path(args.render).write_text(
            "".join(f"# {d.id}\n{render_turns(d, d.labels())}\n" for d in predicted), encoding="utf-8")
    return EXIT_OK


def cmd_eval(args) -> int:
    truth = _select(read_corpus(_require(args.corpus, "corpus")), args.ids)
    if args.predictions:
        predicted = {d.id: d for d in read_corpus(_require(args.predictions, "predictions"))}
    elif args.checkpoint and args.embeddings:
        model, table, use_time, per_speaker = _load_predictor(args.checkpoint, args.embeddings)
        predicted = {d.id: d for d in _predict(truth, model, table, use_time, per_speaker)}
    else:
        raise UsageError("eval: give --predictions, or --checkpoint with --embeddings")
    y_true, y_pred = [], []
    for d in truth:
        if d.id not in predicted:
            raise DataError(f"no predictions for conversation {d.id}")
        p = predicted[d.id]
        if [w.text for w in p.words] != [w.text for w in d.words]:
            raise DataError(f"predicted words differ from reference words in {d.id}")
        y_true += [int(x) for x in d.labels()]
        y_pred += [int(x) for x in p.labels()]
    scores, cm = score(y_true, y_pred)
    print(scores.table())
    print()
    print(cm.table())
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _add_scoring(p):
    p.add_argument("--match", type=int, default=1, help="alignment score for equal tokens (default 1)")
    p.add_argument("--mismatch", type=int, default=-1, help="alignment score for unequal tokens (default -1)")
    p.add_argument("--gap", type=int, default=-1, help="alignment score for a gap (default -1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="convpunct", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("align", help="align one CTM file with its punctuated transcript")
    p.add_argument("--ctm", required=True, help="time-marked words: conv-id channel start duration token")
    p.add_argument("--punct", required=True, help="punctuated transcript: start end channel: text")
    p.add_argument("--out", help="output dialogue file (default: stdout)")
    p.add_argument("--id", help="conversation id (default: the CTM's)")
    _add_scoring(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("prepare", help="align every conversation in a directory into one corpus")
    p.add_argument("--ctm-dir", required=True, help="directory of *.ctm files")
    p.add_argument("--punct-dir", required=True, help="directory of punctuated transcripts")
    p.add_argument("--punct-suffix", default=".txo", help="punctuated file suffix (default .txo)")
    p.add_argument("--out", required=True, help="output corpus file")
    p.add_argument("--embeddings", help="embedding file, needed with --features")
    p.add_argument("--features", help="also write per-conversation feature matrices to this .npz")
    p.add_argument("--vocab-size", type=int, default=DEFAULT_VOCAB_SIZE,
                   help=f"vocabulary cap (default {DEFAULT_VOCAB_SIZE})")
    p.add_argument("--no-time-features", action="store_true", help="zero the two timing columns")
    _add_scoring(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("synth", help="generate a synthetic labelled corpus")
    p.add_argument("--out", required=True, help="output corpus file")
    p.add_argument("--trace", help="write the per-word rule trace here")
    p.add_argument("--conversations", type=int, default=200, help="number of conversations (default 200)")
    p.add_argument("--words", type=int, default=500, help="words per conversation (default 500)")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a CNN or BLSTM tagger")
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--corpus", help="labelled corpus file")
    p.add_argument("--embeddings", help="embedding file (token followed by its values)")
    p.add_argument("--checkpoint", help="where to write the best model")
    p.add_argument("--log", help="write 'epoch train_loss val_loss' lines here")
    p.add_argument("--arch", choices=("cnn", "blstm"), help="architecture (default cnn)")
    p.add_argument("--seed", type=int, help="seed for split, init, shuffling and noise")
    p.add_argument("--batch-size", type=int, help="windows per batch (default 256)")
    p.add_argument("--window", type=int, help="words per window (default 200)")
    p.add_argument("--max-epochs", type=int, help="epoch cap (default 100)")
    p.add_argument("--patience", type=int, help="early-stopping patience in epochs (default 2)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 0.001)")
    p.add_argument("--vocab-size", type=int, help=f"vocabulary cap (default {DEFAULT_VOCAB_SIZE})")
    p.add_argument("--no-time-features", action="store_true", help="zero the two timing columns")
    p.add_argument("--class-weighting", action="store_true", help="weight the loss by inverse class frequency")
    p.add_argument("--split-out", help="write 'id split' lines for the train/validation/test split")
    p.add_argument("--strict-deterministic", action="store_true", help="run BLAS single-threaded")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label a corpus with a trained model")
    p.add_argument("--checkpoint", required=True, help="model checkpoint from 'train'")
    p.add_argument("--embeddings", required=True, help="the embedding file used for training")
    p.add_argument("--corpus", required=True, help="dialogue file to label (labels, if any, are ignored)")
    p.add_argument("--ids", help="only conversations listed here (an id per line, or a split file's test rows)")
    p.add_argument("--out", help="output dialogue file (default: stdout)")
    p.add_argument("--render", help="also write punctuated, capitalized text here")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against reference labels")
    p.add_argument("--corpus", required=True, help="reference corpus")
    p.add_argument("--predictions", help="predicted corpus from 'predict'")
    p.add_argument("--checkpoint", help="predict with this model instead of reading --predictions")
    p.add_argument("--embeddings", help="embedding file for --checkpoint")
    p.add_argument("--ids", help="only conversations listed here (an id per line, or a split file's test rows)")
    p.set_defaults(func=cmd_eval)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        message = exc.strerror or str(exc)
        if exc.filename and str(exc.filename) not in message:
            message = f"{message}: {exc.filename}"
        return _fail("missing_path", message, EXIT_DATA, path=exc.filename)
    except NumericalError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_NUMERIC)
    except (DataError, ValueError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_DATA)


def main() -> None:
    sys.exit(run())
