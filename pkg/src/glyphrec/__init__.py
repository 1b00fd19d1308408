"""Length-insensitive glyph-string recognition lab.

Core pieces: a synthetic corpus generator with controllable length
distributions, a position-free convolutional encoder, the neighbor-matrix
rollout decoder with inference-time attention sharpening, an iterative
feature enhancement module, CTC and parallel-attention baselines, and a
training/evaluation harness for length-extrapolation experiments.
"""

from .corpus import GlyphAlphabet, LengthDistribution, Sample, build_corpus, render_sample
from .decoder import DecodeResult, NeighborDecoder, SharpenConfig
from .encoder import ConvEncoder, FeatureMap
from .fem import FeatureEnhancer
from .model import CTCModel, PATModel, Recognizer, build_model

__all__ = [
    "GlyphAlphabet", "LengthDistribution", "Sample", "build_corpus", "render_sample",
    "DecodeResult", "NeighborDecoder", "SharpenConfig",
    "ConvEncoder", "FeatureMap", "FeatureEnhancer",
    "CTCModel", "PATModel", "Recognizer", "build_model",
]

__version__ = "0.1.0"
