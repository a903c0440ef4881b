"""Corpus splitting, windowing and the training loop with early stopping."""

from __future__ import annotations

import hashlib
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import nncore as nn
from .dialogue import NUM_CLASSES, Dialogue
from .errors import ConfigError, CorpusError, NumericalError
from .features import EmbeddingTable, FeatureMatrix, featurize
from .models import ModelConfig, PunctuationModel, save_checkpoint

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    window: int = 200
    stride: int | None = None
    ratios: tuple[float, float, float] = (8, 1, 1)
    patience: int = 2
    max_epochs: int = 100
    seed: int = 0
    use_time: bool = True
    per_speaker: bool = True
    class_weighting: bool = False
    lr: float = 0.001

    def __post_init__(self):
        if self.batch_size < 1 or self.window < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size, window and max_epochs must be positive")
        if self.stride is not None and not 1 <= self.stride <= self.window:
            raise ConfigError("stride must be in [1, window]")
        if self.patience < 0:
            raise ConfigError("patience must be non-negative")
        if len(self.ratios) != 3 or min(self.ratios) <= 0:
            raise ConfigError("ratios must be three positive numbers")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")


@dataclass
class TrainReport:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopping_epoch: int = 0
    checkpoint_path: str | None = None

    def log_lines(self) -> str:
        return "".join(f"{i}\t{tr:.6f}\t{va:.6f}\n"
                       for i, (tr, va) in enumerate(zip(self.train_losses, self.val_losses), 1))


# -- corpus splitting --------------------------------------------------------

def _keyed_hash(conv_id: str, seed: int) -> bytes:
    key = seed.to_bytes(8, "little", signed=True)
    return hashlib.blake2b(conv_id.encode("utf-8"), key=key, digest_size=16).digest()


def split_corpus(ids: Sequence[str], ratios=(8, 1, 1), seed: int = 0) -> tuple[list[str], list[str], list[str]]:
    """Assign whole conversations to train/validation/test.

    Conversations are ordered by a hash of their id keyed with ``seed`` and
    cut at the rounded ratio boundaries, so the split depends only on the
    set of ids and the seed.
    """
    ids = [getattr(i, "id", i) for i in ids]
    if len(set(ids)) != len(ids):
        raise CorpusError("duplicate conversation ids")
    if len(ids) < 10:
        warnings.warn(f"only {len(ids)} conversations; splits will be tiny", stacklevel=2)
    total = float(sum(ratios))
    n = len(ids)
    n_train = round(n * ratios[0] / total)
    n_val = min(round(n * ratios[1] / total), n - n_train)
    order = sorted(ids, key=lambda i: _keyed_hash(i, seed))
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


# -- windowing ---------------------------------------------------------------

@dataclass
class Windows:
    """Stacked fixed-length windows: rows (N, W, D), labels (N, W), mask (N, W)."""

    rows: np.ndarray
    labels: np.ndarray
    mask: np.ndarray

    def __len__(self) -> int:
        return self.rows.shape[0]

    def __getitem__(self, idx) -> "Windows":
        return Windows(self.rows[idx], self.labels[idx], self.mask[idx])

    @classmethod
    def concat(cls, parts: Sequence["Windows"]) -> "Windows":
        return cls(np.concatenate([p.rows for p in parts]),
                   np.concatenate([p.labels for p in parts]),
                   np.concatenate([p.mask for p in parts]))


def make_windows(features: FeatureMatrix, labels: Sequence[int], window: int = 200,
                 stride: int | None = None) -> Windows:
    """Cut one dialogue into consecutive windows, zero-padding the last.

    With the default stride (= window) every word lands in exactly one
    window.
    """
    stride = stride or window
    T, D = features.rows.shape
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != T:
        raise ValueError("labels and features differ in length")
    starts = list(range(0, max(T - window, 0) + 1, stride)) if T else []
    if T and starts[-1] + window < T:
        starts.append(starts[-1] + stride)
    n = len(starts)
    rows = np.zeros((n, window, D), dtype=features.rows.dtype)
    out_labels = np.zeros((n, window), dtype=np.int64)
    mask = np.zeros((n, window), dtype=bool)
    for k, s in enumerate(starts):
        e = min(s + window, T)
        rows[k, :e - s] = features.rows[s:e]
        out_labels[k, :e - s] = labels[s:e]
        mask[k, :e - s] = features.mask[s:e]
    return Windows(rows, out_labels, mask)


def corpus_windows(dialogues: Sequence[Dialogue], table: EmbeddingTable, config: TrainConfig) -> Windows:
    parts = [make_windows(featurize(d, table, config.use_time, config.per_speaker),
                          [int(label) for label in d.labels()], config.window, config.stride)
             for d in dialogues if len(d)]
    if not parts:
        raise CorpusError("no words to train on")
    return Windows.concat(parts)


def class_weights(labels: np.ndarray, mask: np.ndarray, n_classes: int = NUM_CLASSES) -> np.ndarray:
    """Inverse-frequency weights ``N / (C * n_c)``; absent classes get 1."""
    counts = np.bincount(labels[mask], minlength=n_classes).astype(np.float64)
    total = counts.sum()
    with np.errstate(divide="ignore"):
        weights = np.where(counts > 0, total / (n_classes * counts), 1.0)
    return weights


# -- optimisation ------------------------------------------------------------

class EarlyStopping:
    """Stop once the monitored loss has not improved for ``patience`` epochs."""

    def __init__(self, patience: int = 2):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record one epoch's loss; True means stop now."""
        if loss < self.best:
            self.best, self.best_epoch, self.wait = loss, epoch, 0
            return False
        self.wait += 1
        return self.wait >= self.patience


def evaluate_loss(model: PunctuationModel, windows: Windows, batch_size: int = 64) -> float:
    """Mean cross-entropy over all valid positions, inference mode."""
    total, count = 0.0, 0
    for s in range(0, len(windows), batch_size):
        b = windows[s:s + batch_size]
        probs = model.forward(b.rows, b.mask)
        m = int(b.mask.sum())
        if m == 0:
            continue
        loss, _ = nn.masked_cross_entropy(probs, b.labels, b.mask)
        total += loss * m
        count += m
    if count == 0:
        raise NumericalError("validation set has no valid positions")
    return total / count


EpochCallback = Callable[[int, PunctuationModel, float, float], None]


def fit(config: TrainConfig, model_config: ModelConfig, train: Sequence[Dialogue],
        validation: Sequence[Dialogue], table: EmbeddingTable,
        checkpoint_path=None, on_epoch_end: EpochCallback | None = None,
        validate: Callable[[PunctuationModel, Windows], float] = evaluate_loss,
        ) -> tuple[PunctuationModel, TrainReport]:
    """Train with Adam and early stopping; return the best-validation model.

    ``validate`` computes the monitored loss; tests substitute scripted
    sequences through it.
    """
    if not train:
        raise ConfigError("empty training set")
    if not validation:
        raise ConfigError("empty validation set")
    train_w = corpus_windows(train, table, config)
    val_w = corpus_windows(validation, table, config)
    if train_w.rows.shape[-1] != model_config.input_dim:
        raise ConfigError(f"features have {train_w.rows.shape[-1]} columns, "
                          f"model expects {model_config.input_dim}")

    model = PunctuationModel(model_config, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    adam = nn.AdamState(lr=config.lr)
    weights = class_weights(train_w.labels, train_w.mask) if config.class_weighting else None
    stopper = EarlyStopping(config.patience)
    report = TrainReport()
    best_params = {k: v.copy() for k, v in model.params.items()}

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_w))
        seen, epoch_loss = 0, 0.0
        for bi, s in enumerate(range(0, len(order), config.batch_size)):
            batch = train_w[np.sort(order[s:s + config.batch_size])]
            probs = model.forward(batch.rows, batch.mask, training=True, rng=rng)
            loss, dlogits = nn.masked_cross_entropy(probs, batch.labels, batch.mask, weights)
            total = loss + nn.decay_loss(model.parameters)
            if not math.isfinite(total):
                raise NumericalError(f"non-finite loss {total} at epoch {epoch}, batch {bi}")
            model.zero_grad()
            model.backward(dlogits)
            nn.adam_step(model.parameters, adam)
            m = int(batch.mask.sum())
            seen += m
            epoch_loss += loss * m
        train_loss = epoch_loss / seen
        val_loss = float(validate(model, val_w))
        if not math.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        report.train_losses.append(train_loss)
        report.val_losses.append(val_loss)
        log.info("epoch %d\ttrain %.5f\tval %.5f", epoch, train_loss, val_loss)
        stop = stopper.update(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best_params = {k: v.copy() for k, v in model.params.items()}
        if on_epoch_end is not None:
            on_epoch_end(epoch, model, train_loss, val_loss)
        report.stopping_epoch = epoch
        if stop:
            break

    model.load_params(best_params)
    report.best_epoch = stopper.best_epoch
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path)
        report.checkpoint_path = str(checkpoint_path)
    return model, report
