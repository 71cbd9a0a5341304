"""Code-aware self-attention mask and its sparsity statistics.

The mask extends Tanner-graph connectivity to two rings: bit positions
attend to every bit they share a parity check with, bits and their checks
attend to each other, and check positions never attend to other checks.
Built once per code, then shared read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .codes import as_binary_matrix

MASK_SENTINEL = 1.0e9  # finite stand-in for -inf so softmax rows stay well-defined


@dataclass(frozen=True)
class AttentionMask:
    """Symmetric (2n-k) x (2n-k) allow table; True = attend."""

    allow: np.ndarray
    n: int
    k: int

    @property
    def size(self) -> int:
        return self.allow.shape[0]

    def additive(self, dtype=np.float32, sentinel: float = MASK_SENTINEL) -> np.ndarray:
        """0 where allowed, -sentinel where denied."""
        return np.where(self.allow, dtype(0), dtype(-sentinel)).astype(dtype)


def build_mask(h: np.ndarray) -> AttentionMask:
    """Construct the allow table from a parity-check matrix.

    Starting from the identity: for every row of H, each pair of
    one-positions is unmasked both ways, and each one-position is unmasked
    against that row's check position (offset n). Check-check pairs stay
    masked.
    """
    h = as_binary_matrix(h)
    m, n = h.shape
    k = n - m
    size = 2 * n - k
    allow = np.zeros((size, size), dtype=bool)
    allow[:n, :n] = (h.T.astype(np.int64) @ h.astype(np.int64)) > 0
    allow[n:, :n] = h.astype(bool)
    allow[:n, n:] = h.T.astype(bool)
    np.fill_diagonal(allow, True)
    return AttentionMask(allow=allow, n=n, k=k)


@dataclass(frozen=True)
class MaskStats:
    """Mask sparsity figures relative to the full (2n-k)^2 attention map."""

    size: int
    allowed: int
    denied: int
    sparsity_ratio: float
    pairwise_compute_ratio: float
    parity_density: int  # total ones in H, the code-density complexity bound

    def to_dict(self) -> dict:
        return asdict(self)


def mask_stats(mask: AttentionMask, h: np.ndarray) -> MaskStats:
    h = as_binary_matrix(h)
    total = mask.size ** 2
    allowed = int(mask.allow.sum())
    return MaskStats(
        size=mask.size,
        allowed=allowed,
        denied=total - allowed,
        sparsity_ratio=(total - allowed) / total,
        pairwise_compute_ratio=allowed / total,
        parity_density=int(h.sum()),
    )


def render_allow_grid(mask: AttentionMask) -> str:
    """Textual dump of the allow table ('#' = attend, '.' = denied)."""
    rows = ["".join("#" if v else "." for v in row) for row in mask.allow]
    return "\n".join(rows) + "\n"
