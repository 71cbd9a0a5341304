"""Codeword-invariant preprocessing and postprocessing.

The decoder never sees the received word directly: it sees the magnitude
vector together with the syndrome of the hard decision, a representation
that is identical for every transmitted codeword under the same
multiplicative noise. The output side plugs the received signs back in to
recover a codeword estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ReceivedWord
from .codes import syndrome


def hard_decision(y) -> np.ndarray:
    """Binary quantization: 0 for y >= 0, 1 for y < 0 (0 maps to BPSK +1)."""
    return (np.asarray(y) < 0).astype(np.uint8)


@dataclass(frozen=True)
class PreprocessedWord:
    """Model input [|y|, s(y)] of length 2n-k."""

    magnitude: np.ndarray
    synd: np.ndarray

    @property
    def combined(self) -> np.ndarray:
        return np.concatenate(
            [self.magnitude, self.synd.astype(self.magnitude.dtype)], axis=-1)

    def __len__(self) -> int:
        return self.magnitude.shape[-1] + self.synd.shape[-1]


def preprocess(h: np.ndarray, y) -> PreprocessedWord:
    """Reduce a received word to magnitudes plus hard-decision syndrome.

    Accepts a ReceivedWord, an (n,) vector, or a (batch, n) block.
    """
    if isinstance(y, ReceivedWord):
        y = y.y
    y = np.asarray(y)
    if y.shape[-1] != h.shape[1]:
        raise ValueError(f"received length {y.shape[-1]} != n={h.shape[1]}")
    return PreprocessedWord(magnitude=np.abs(y), synd=syndrome(h, hard_decision(y)))


def multiplicative_target(y, x_s) -> np.ndarray:
    """Binary multiplicative noise: 1 exactly where the hard decision flipped.

    z = bin(y * x_s) for transmitted symbols x_s in {+1, -1}.
    """
    y = np.asarray(y)
    x_s = np.asarray(x_s)
    if y.shape != x_s.shape:
        raise ValueError(f"shape mismatch: y {y.shape} vs x_s {x_s.shape}")
    return hard_decision(y * x_s)


def postprocess(y, soft_noise) -> np.ndarray:
    """Combine the signed noise estimate with the received word: bin(sign(soft * y)).

    soft_noise is the signed estimate in (-1, 1); +1 means "no flip". A
    positive product keeps the hard decision 0, a negative one flips it.
    """
    y = np.asarray(y)
    soft = np.asarray(soft_noise)
    if y.shape != soft.shape:
        raise ValueError(f"shape mismatch: y {y.shape} vs soft_noise {soft.shape}")
    return hard_decision(soft * y)
