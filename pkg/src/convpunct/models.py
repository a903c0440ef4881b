"""The dilated-CNN and stacked-BLSTM punctuation taggers, plus checkpoints."""

from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nncore as nn
from .config import coerce, parse_config
from .dialogue import Dialogue, PunctuationClass
from .errors import (BadMagicError, CheckpointError, CheckpointShapeError, ConfigError,
                     ShapeError, TruncatedCheckpointError, VersionError)
from .features import EmbeddingTable, featurize, noise_column_mask

ARCHS = ("cnn", "blstm")


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "cnn"
    input_dim: int = 303
    classes: int = 4
    filters: int = 128
    kernels: tuple[int, ...] = (3, 3, 3, 3, 3, 20)
    dilations: tuple[int, ...] = (1, 2, 2, 2, 2, 1)
    hidden: int = 128
    blstm_layers: int = 4
    dropout: float = 0.5
    noise: float = 0.1
    weight_decay: float = 0.001

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if len(self.kernels) != len(self.dilations):
            raise ConfigError("kernels and dilations must have the same length")
        dims = [self.input_dim, self.classes, self.filters, self.hidden, self.blstm_layers,
                *self.kernels, *self.dilations]
        if min(dims) < 1:
            raise ConfigError("model dimensions must be positive")
        if self.input_dim < 4:
            raise ConfigError("input_dim must leave room for side and timing columns")

    def to_text(self) -> str:
        """Canonical ``key = value`` lines, sorted by key."""
        lines = []
        for f in sorted(dataclasses.fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}\n")
        return "".join(lines)

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "ModelConfig":
        return cls(**coerce(cls, values))

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        return cls.from_mapping(parse_config(text))

    def receptive_field(self) -> tuple[int, int]:
        """How many positions to the left and right one CNN output can see."""
        left = right = 0
        for k, d in zip(self.kernels, self.dilations):
            lpad, rpad = nn.same_padding(k, d)
            left += lpad
            right += rpad
        return left, right


def _build_net(config: ModelConfig, rng: np.random.Generator, dtype, zero_softmax: bool) -> nn.Sequential:
    c = config
    layers: list[nn.Layer] = [nn.GaussianNoise(c.noise, noise_column_mask(c.input_dim))]
    if c.arch == "cnn":
        width = c.input_dim
        for i, (k, d) in enumerate(zip(c.kernels, c.dilations)):
            layers += [nn.Conv1D(f"conv{i}", width, c.filters, k, d, rng, dtype),
                       nn.GaussianNoise(c.noise),
                       nn.SELU()]
            width = c.filters
    else:
        width = c.input_dim
        for i in range(c.blstm_layers):
            layers.append(nn.BiLSTM(f"blstm{i}", width, c.hidden, c.weight_decay, rng, dtype))
            width = 2 * c.hidden
    layers += [nn.Dropout(c.dropout),
               nn.GaussianNoise(c.noise),
               nn.Dense("softmax", width, c.classes, c.weight_decay, rng, dtype, zero_softmax)]
    return nn.Sequential(layers)


class PunctuationModel:
    """A network built from a ``ModelConfig``.

    ``params`` maps parameter names to their arrays; these are the arrays
    the layers use, so writing into them changes the model.
    """

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32,
                 zero_softmax: bool = False):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.net = _build_net(config, np.random.default_rng(seed), self.dtype, zero_softmax)

    @property
    def parameters(self) -> list[nn.Parameter]:
        return self.net.params

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self.net.params}

    def load_params(self, values: dict[str, np.ndarray]) -> None:
        for p in self.net.params:
            if p.name not in values:
                raise ShapeError(f"missing parameter {p.name}")
            v = np.asarray(values[p.name])
            if v.shape != p.value.shape:
                raise ShapeError(f"{p.name}: shape {v.shape} != {p.value.shape}")
            p.value[...] = v

    def logits(self, x: np.ndarray, mask: np.ndarray | None = None, training: bool = False,
               rng: np.random.Generator | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
            mask = None if mask is None else np.asarray(mask)[None]
        if x.shape[-1] != self.config.input_dim:
            raise ShapeError(f"features have {x.shape[-1]} columns, model expects {self.config.input_dim}")
        if training and rng is None:
            raise ValueError("training mode needs a random generator")
        out = self.net.forward(x, nn.Context(mask, training, rng))
        return out[0] if squeeze else out

    def forward(self, x, mask=None, training=False, rng=None) -> np.ndarray:
        """Per-step class probabilities, shape (..., T, classes)."""
        return nn.softmax(self.logits(x, mask, training, rng))

    def backward(self, dlogits: np.ndarray) -> None:
        self.net.backward(dlogits)

    def zero_grad(self) -> None:
        self.net.zero_grad()


def forward(model: PunctuationModel, features, training: bool = False,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Probabilities for one featurized dialogue (a ``FeatureMatrix`` or array)."""
    rows = getattr(features, "rows", features)
    mask = getattr(features, "mask", None)
    return model.forward(rows, mask, training, rng)


def predict_labels(model: PunctuationModel, dialogue: Dialogue, table: EmbeddingTable,
                   use_time: bool = True, per_speaker: bool = True) -> list[PunctuationClass]:
    """Most probable class per word over the whole dialogue at once."""
    if len(dialogue) == 0:
        return []
    probs = forward(model, featurize(dialogue, table, use_time, per_speaker))
    # argmax returns the first maximum, i.e. the lowest class index on ties
    return [PunctuationClass(int(i)) for i in probs.argmax(axis=-1)]


# -- checkpoints -----------------------------------------------------------
#
# "PNCT" | version u32 | config text (u32 length + UTF-8) | tensor count u32 |
# per tensor: name (u32 length + UTF-8), rank u32, dims u32 x rank, f32 LE data

MAGIC = b"PNCT"
VERSION = 1


def _pack_str(s: str) -> bytes:
    data = s.encode("utf-8")
    return struct.pack("<I", len(data)) + data


def checkpoint_bytes(model: PunctuationModel) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION), _pack_str(model.config.to_text()),
             struct.pack("<I", len(model.parameters))]
    for p in model.parameters:
        arr = np.ascontiguousarray(p.value, dtype="<f4")
        parts += [_pack_str(p.name), struct.pack("<I", arr.ndim),
                  struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    return b"".join(parts)


def save_checkpoint(model: PunctuationModel, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"checkpoint truncated: need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def model_from_bytes(data: bytes) -> PunctuationModel:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise BadMagicError("not a checkpoint: bad magic")
    version = r.u32()
    if version != VERSION:
        raise VersionError(f"checkpoint version {version}, expected {VERSION}")
    try:
        config = ModelConfig.from_text(r.string())
    except ConfigError as exc:
        raise CheckpointError(f"bad embedded config: {exc}") from None
    model = PunctuationModel(config)
    expected = {p.name: p.value.shape for p in model.parameters}
    count = r.u32()
    values = {}
    for _ in range(count):
        name = r.string()
        rank = r.u32()
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank))
        if name not in expected:
            raise CheckpointShapeError(f"unexpected tensor {name!r}")
        if tuple(shape) != expected[name]:
            raise CheckpointShapeError(f"{name}: stored shape {shape} != config shape {expected[name]}")
        n = int(np.prod(shape))
        values[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape)
    missing = set(expected) - set(values)
    if missing:
        raise CheckpointShapeError(f"missing tensors: {sorted(missing)}")
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after last tensor")
    model.load_params(values)
    return model


def load_checkpoint(path) -> PunctuationModel:
    return model_from_bytes(Path(path).read_bytes())
