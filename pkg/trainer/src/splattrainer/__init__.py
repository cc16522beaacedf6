"""splattrainer: toy-scale decoder-only next-scale predictor over exported
splat token streams and attention masks."""

from .config import ModelConfig
from .formats import QuantRanges, Token, read_mask, read_tokens, write_tokens
from .generate import generate
from .model import NextScaleModel, rope_angles
from .training import TreeBatch, evaluate, fit, prepare_batch, train_step

__version__ = "0.1.0"
