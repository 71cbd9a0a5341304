"""Adam optimizer and cosine learning-rate decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


class DivergenceError(RuntimeError):
    """Raised when a non-finite gradient reaches the optimizer."""

    def __init__(self, param_name: str, step: int):
        self.param_name = param_name
        self.step = step
        super().__init__(f"non-finite gradient for parameter {param_name!r} at step {step}")


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter.

    Hyperparameters default to the universal (0.9, 0.999, 1e-8); they are
    recorded in checkpoints.
    """

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(m={n: np.zeros_like(p.data) for n, p in params.items()},
                   v={n: np.zeros_like(p.data) for n, p in params.items()})


def adam_step(params: dict[str, Tensor], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place. A missing gradient counts as zero."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}")
        if not np.isfinite(g).all():
            raise DivergenceError(name, t)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= (lr / c1) * m / (np.sqrt(v / c2) + state.eps)


@dataclass(frozen=True)
class LrSchedule:
    """Cosine decay from lr_start at step 0 to lr_end at total_steps. No warmup."""

    total_steps: int
    lr_start: float = 1e-4
    lr_end: float = 5e-7

    def at(self, step: int) -> float:
        return cosine_lr(step, self.total_steps, self.lr_start, self.lr_end)


def cosine_lr(step: int, total_steps: int, lr_start: float = 1e-4,
              lr_end: float = 5e-7) -> float:
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside 0..{total_steps}")
    if total_steps == 0:
        return lr_start
    return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + math.cos(math.pi * step / total_steps))
