"""Transformer-based soft decoding of binary linear block codes.

Core pieces: GF(2) code algebra, AWGN channel simulation, the
codeword-invariant input/output transforms, the code-aware attention mask,
a minimal reverse-mode autodiff engine, the transformer decoder and its
training loop, a sum-product BP baseline, and a Monte Carlo BER harness.
"""

from .channel import ChannelParams, ReceivedWord, bpsk_modulate, ebno_to_sigma, transmit
from .codes import (
    LinearCode,
    all_codewords,
    encode,
    generator_from_parity,
    load_code,
    ml_decode,
    parse_alist,
    emit_alist,
    syndrome,
)
from .mask import AttentionMask, MaskStats, build_mask, mask_stats
from .transform import (
    PreprocessedWord,
    hard_decision,
    multiplicative_target,
    postprocess,
    preprocess,
)

__all__ = [
    "AttentionMask",
    "ChannelParams",
    "LinearCode",
    "MaskStats",
    "PreprocessedWord",
    "ReceivedWord",
    "all_codewords",
    "bpsk_modulate",
    "build_mask",
    "ebno_to_sigma",
    "emit_alist",
    "encode",
    "generator_from_parity",
    "hard_decision",
    "load_code",
    "mask_stats",
    "ml_decode",
    "multiplicative_target",
    "parse_alist",
    "postprocess",
    "preprocess",
    "syndrome",
    "transmit",
]

__version__ = "0.1.0"
