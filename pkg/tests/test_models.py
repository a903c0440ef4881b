import numpy as np
import pytest

from convpunct import nncore as nn
from convpunct.dialogue import Dialogue, PunctuationClass as P, Word
from convpunct.errors import (BadMagicError, CheckpointError, CheckpointShapeError, ConfigError,
                              ShapeError, TruncatedCheckpointError, VersionError)
from convpunct.features import load_embeddings
from convpunct.models import (ModelConfig, PunctuationModel, checkpoint_bytes, forward,
                              load_checkpoint, model_from_bytes, predict_labels, save_checkpoint)

SMALL_CNN = ModelConfig(arch="cnn", input_dim=12, filters=5)
SMALL_BLSTM = ModelConfig(arch="blstm", input_dim=12, hidden=3, blstm_layers=2)


def test_receptive_field_closed_form():
    assert ModelConfig().receptive_field() == (19, 18)


def test_config_text_round_trip():
    for cfg in (ModelConfig(), SMALL_BLSTM, ModelConfig(kernels=(5, 4), dilations=(1, 3))):
        assert ModelConfig.from_text(cfg.to_text()) == cfg


@pytest.mark.parametrize("kwargs", [dict(arch="gru"), dict(kernels=(3,), dilations=(1, 2)),
                                    dict(filters=0), dict(input_dim=3)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        ModelConfig(**kwargs)


def test_unknown_config_key():
    with pytest.raises(ConfigError):
        ModelConfig.from_text("arch = cnn\ncolour = red\n")


@pytest.mark.parametrize("config", [SMALL_CNN, SMALL_BLSTM])
def test_zero_softmax_gives_uniform_rows(config):
    model = PunctuationModel(config, zero_softmax=True)
    probs = model.forward(np.random.default_rng(0).normal(size=(7, 12)))
    assert np.allclose(probs, 0.25)


@pytest.mark.parametrize("config", [ModelConfig(), SMALL_BLSTM])
def test_single_step_shape(config):
    model = PunctuationModel(config)
    probs = model.forward(np.ones((1, config.input_dim), np.float32))
    assert probs.shape == (1, 4)
    assert abs(probs.sum() - 1) < 1e-6


@pytest.mark.parametrize("config", [SMALL_CNN, SMALL_BLSTM])
def test_forward_is_deterministic(config):
    x = np.random.default_rng(1).normal(size=(2, 9, 12)).astype(np.float32)
    a = PunctuationModel(config, seed=5).forward(x)
    b = PunctuationModel(config, seed=5).forward(x)
    assert np.array_equal(a, b)


def test_training_mode_needs_rng():
    with pytest.raises(ValueError):
        PunctuationModel(SMALL_CNN).forward(np.zeros((3, 12)), training=True)


def test_wrong_width_rejected():
    with pytest.raises(ShapeError):
        PunctuationModel(SMALL_CNN).forward(np.zeros((3, 11)))


def test_inference_ignores_noise_and_dropout():
    model = PunctuationModel(SMALL_CNN)
    x = np.random.default_rng(2).normal(size=(5, 12)).astype(np.float32)
    assert np.array_equal(model.forward(x), model.forward(x))
    noisy = model.forward(x, training=True, rng=np.random.default_rng(0))
    assert not np.array_equal(noisy, model.forward(x))


def _table(dim):
    lines = [f"hi {' '.join(['0.1'] * dim)}"]
    return load_embeddings(lines, ["hi"], dim=dim)


def test_predict_uniform_model_is_all_blank():
    model = PunctuationModel(SMALL_CNN, zero_softmax=True)
    d = Dialogue("d", (Word("hi", "A", 0.0, 0.2), Word("yo", "B", 0.5, 0.2)))
    assert predict_labels(model, d, _table(9)) == [P.BLANK, P.BLANK]


def test_predict_empty_dialogue():
    assert predict_labels(PunctuationModel(SMALL_CNN), Dialogue("e", ()), _table(9)) == []


def test_module_forward_accepts_feature_matrix():
    from convpunct.features import featurize
    model = PunctuationModel(SMALL_CNN)
    d = Dialogue("d", (Word("hi", "A", 0.0, 0.2),))
    fm = featurize(d, _table(9))
    assert np.array_equal(forward(model, fm), model.forward(fm.rows))


# -- checkpoints ---------------------------------------------------------------

@pytest.mark.parametrize("config", [SMALL_CNN, SMALL_BLSTM])
def test_checkpoint_round_trip(tmp_path, config):
    model = PunctuationModel(config, seed=3)
    path = tmp_path / "m.pnct"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.config == config
    for name, value in model.params.items():
        assert np.array_equal(loaded.params[name], value)
    assert checkpoint_bytes(loaded) == path.read_bytes()


def test_bad_magic():
    data = checkpoint_bytes(PunctuationModel(SMALL_CNN))
    with pytest.raises(BadMagicError):
        model_from_bytes(b"XXXX" + data[4:])


def test_truncated():
    data = checkpoint_bytes(PunctuationModel(SMALL_CNN))
    with pytest.raises(TruncatedCheckpointError):
        model_from_bytes(data[:-4])


def test_version_mismatch():
    data = bytearray(checkpoint_bytes(PunctuationModel(SMALL_CNN)))
    data[4] = 99
    with pytest.raises(VersionError):
        model_from_bytes(bytes(data))


def test_trailing_bytes():
    with pytest.raises(CheckpointError):
        model_from_bytes(checkpoint_bytes(PunctuationModel(SMALL_CNN)) + b"\0")


def test_shape_mismatch_between_config_and_tensor():
    small = checkpoint_bytes(PunctuationModel(SMALL_CNN))
    other = ModelConfig(arch="cnn", input_dim=12, filters=6)
    header = checkpoint_bytes(PunctuationModel(other))
    # Splice the other config's text onto the first model's tensors.
    import struct
    n1 = struct.unpack("<I", small[8:12])[0]
    n2 = struct.unpack("<I", header[8:12])[0]
    spliced = header[:12 + n2] + small[12 + n1:]
    with pytest.raises(CheckpointShapeError):
        model_from_bytes(spliced)


def test_checkpoint_errors_are_data_errors():
    from convpunct.errors import DataError
    assert issubclass(BadMagicError, DataError) and issubclass(TruncatedCheckpointError, DataError)
