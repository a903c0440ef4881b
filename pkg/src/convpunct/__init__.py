"""Punctuation restoration for two-speaker conversational transcripts.

Aligns time-marked ASR words with punctuated reference transcripts,
featurizes them (word embeddings, speaker side, pause and duration), and
trains dilated-CNN or BLSTM taggers that predict one of blank, comma, dot
or question mark after each word.
"""

__version__ = "0.1.0"

from .align import ScoringScheme, align_transcripts, nw_align
from .dialogue import Dialogue, PunctuationClass, Word, read_corpus, write_corpus
from .errors import ConvpunctError, DataError, NumericalError
from .evaluation import render_punctuated, score
from .features import EmbeddingTable, featurize, load_embeddings, read_embeddings
from .models import ModelConfig, PunctuationModel, load_checkpoint, predict_labels, save_checkpoint
from .synth import SynthConfig, generate
from .training import TrainConfig, fit, split_corpus

__all__ = [
    "ConvpunctError", "DataError", "Dialogue", "EmbeddingTable", "ModelConfig", "NumericalError",
    "PunctuationClass", "PunctuationModel", "ScoringScheme", "SynthConfig", "TrainConfig", "Word",
    "align_transcripts", "featurize", "fit", "generate", "load_checkpoint", "load_embeddings",
    "nw_align", "predict_labels", "read_corpus", "read_embeddings", "render_punctuated",
    "save_checkpoint", "score", "split_corpus", "write_corpus",
]
