"""BPSK modulation and AWGN channel simulation, parameterized by normalized SNR.

SNR is always expressed as E_b/N_0 in dB. Noise draws come from a seeded
numpy Generator (PCG64); the algorithm name is recorded in run metadata so
reports stay attributable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RNG_ALGORITHM = "numpy-pcg64/standard_normal"


def ebno_to_sigma(ebno_db: float, rate: float) -> float:
    """Noise standard deviation for a given E_b/N_0 (dB) and code rate.

    sigma = (2 * rate * 10^(ebno_db/10))^(-1/2), unit-energy BPSK symbols.
    """
    if not 0.0 < rate < 1.0:
        raise ValueError(f"rate must be in (0, 1), got {rate}")
    return float((2.0 * rate * 10.0 ** (ebno_db / 10.0)) ** -0.5)


@dataclass(frozen=True)
class ChannelParams:
    """AWGN channel operating point."""

    ebno_db: float
    rate: float

    @property
    def sigma(self) -> float:
        return ebno_to_sigma(self.ebno_db, self.rate)


@dataclass(frozen=True)
class ReceivedWord:
    """Channel output y = BPSK(x) + noise, with the parameters that produced it."""

    y: np.ndarray
    meta: ChannelParams | None = None


def bpsk_modulate(bits) -> np.ndarray:
    """Map bits to symbols: 0 -> +1, 1 -> -1."""
    b = np.asarray(bits)
    if not np.isin(b, (0, 1)).all():
        raise ValueError("bits must be 0 or 1")
    return 1.0 - 2.0 * b.astype(np.float64)


def transmit(x_s, sigma: float, rng: np.random.Generator,
             meta: ChannelParams | None = None) -> ReceivedWord:
    """Add white Gaussian noise of standard deviation sigma to BPSK symbols."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x_s = np.asarray(x_s, dtype=np.float64)
    y = x_s + sigma * rng.standard_normal(x_s.shape)
    return ReceivedWord(y=y, meta=meta)
