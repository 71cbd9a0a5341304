"""Minimal reverse-mode automatic differentiation over numpy arrays.

Provides exactly the primitives the decoder stack needs: broadcast-aware
add/mul, batched matmul, transpose/reshape, softmax, exact-erf GELU, layer
norm, and a numerically stable binary cross-entropy on logits. Each node
records its parents and a backward closure; backward() walks the tape once
in reverse topological order. No graph compiler, no mixed precision.

Everything is pure given (inputs, parameters); gradient correctness is
checked against central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """Array node on the autodiff tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={'set' if self.grad is not None else 'none'})"

    def detach(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate gradients of this scalar into every reachable tensor."""
        if self.data.ndim != 0 and self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, contribution in node._backward(node.grad):
                if not parent.requires_grad:
                    continue
                g = _unbroadcast(contribution, parent.data.shape)
                parent.grad = g if parent.grad is None else parent.grad + g

    # arithmetic sugar; non-Tensor operands become constants
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, smul(_wrap(other), -1.0))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __neg__(self):
        return smul(self, -1.0)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape numpy broadcast it up from."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    squeeze = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if squeeze:
        grad = grad.sum(axis=squeeze, keepdims=True)
    return grad


def parameter(data, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr, requires_grad=True)


def add(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(a.data + b.data, parents=(a, b),
                  backward=lambda g: ((a, g), (b, g)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(a.data * b.data, parents=(a, b),
                  backward=lambda g: ((a, g * b.data), (b, g * a.data)))


def smul(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    return Tensor(a.data * c, parents=(a,), backward=lambda g: ((a, g * c),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product on the last two axes, numpy broadcasting rules."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must have >= 2 dimensions")

    def backward(g):
        return ((a, g @ np.swapaxes(b.data, -1, -2)),
                (b, np.swapaxes(a.data, -1, -2) @ g))

    return Tensor(a.data @ b.data, parents=(a, b), backward=backward)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = tuple(int(i) for i in np.argsort(axes))
    return Tensor(a.data.transpose(axes), parents=(a,),
                  backward=lambda g: ((a, g.transpose(inverse)),))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.data.shape
    return Tensor(a.data.reshape(shape), parents=(a,),
                  backward=lambda g: ((a, g.reshape(old)),))


def sum_all(a: Tensor) -> Tensor:
    return Tensor(np.asarray(a.data.sum()), parents=(a,),
                  backward=lambda g: ((a, np.broadcast_to(g, a.data.shape).copy()),))


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x W + b with the usual gradient contract."""
    if x.data.shape[-1] != w.data.shape[0]:
        raise ValueError(f"affine shape mismatch: x {x.data.shape} vs W {w.data.shape}")
    if b.data.shape != (w.data.shape[-1],):
        raise ValueError(f"bias shape {b.data.shape} != ({w.data.shape[-1]},)")
    return add(matmul(x, w), b)


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GELU (erf form, not the tanh approximation)."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd * _INV_SQRT2))

    def backward(g):
        pdf = np.exp(-0.5 * xd * xd) * _INV_SQRT2PI
        return ((x, g * (cdf + xd * pdf).astype(xd.dtype)),)

    return Tensor((xd * cdf).astype(xd.dtype), parents=(x,), backward=backward)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, max-shifted for stability."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return ((x, y * (g - inner)),)

    return Tensor(y, parents=(x,), backward=backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance; then scale and shift."""
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ValueError(f"gain/bias must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gain.data + bias.data

    def backward(g):
        gh = g * gain.data
        term = (d * gh - gh.sum(axis=-1, keepdims=True)
                - xhat * (gh * xhat).sum(axis=-1, keepdims=True))
        dx = (inv / d) * term
        dgain = (g * xhat).reshape(-1, d).sum(axis=0)
        dbias = g.reshape(-1, d).sum(axis=0)
        return ((x, dx.astype(x.data.dtype)), (gain, dgain), (bias, dbias))

    return Tensor(y.astype(x.data.dtype), parents=(x, gain, bias), backward=backward)


def geglu_ffn(x: Tensor, w_gate: Tensor, b_gate: Tensor, w_lin: Tensor, b_lin: Tensor,
              w_out: Tensor, b_out: Tensor) -> Tensor:
    """Gated feed-forward block: (GELU(x W1 + b1) * (x W2 + b2)) W3 + b3."""
    gate = gelu(affine(x, w_gate, b_gate))
    lin = affine(x, w_lin, b_lin)
    return affine(mul(gate, lin), w_out, b_out)


def masked_attention(q: Tensor, k: Tensor, v: Tensor, additive_mask: np.ndarray,
                     scale: float, return_probs: bool = False):
    """Scaled dot-product attention with an additive allow/deny mask.

    q, k, v: [..., S, d_head]; additive_mask: (S, S) with 0 on allowed pairs
    and a large negative value on denied ones, added to the raw scores
    before scaling. Denied pairs end up with softmax weight that underflows
    to zero.
    """
    s = q.data.shape[-2]
    if additive_mask.shape != (s, s):
        raise ValueError(f"mask shape {additive_mask.shape} != ({s}, {s})")
    if q.data.shape != k.data.shape or q.data.shape != v.data.shape:
        raise ValueError("q, k, v must share one shape")
    lo = additive_mask.min()
    if lo < 0 and not (additive_mask > lo / 2).any(axis=-1).all():
        raise ValueError("attention mask has a fully denied row")
    scores = add(matmul(q, transpose(k, _swap_last(q.data.ndim))), Tensor(additive_mask))
    probs = softmax(smul(scores, 1.0 / scale))
    out = matmul(probs, v)
    if return_probs:
        return out, probs
    return out


def _swap_last(ndim: int) -> tuple[int, ...]:
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Binary cross-entropy against {0,1} targets, computed from logits.

    Stable form max(u,0) - u*z + log(1 + exp(-|u|)); summed over the last
    axis and averaged over any leading (batch) axes. The gradient is
    (sigmoid(u) - z) / batch.
    """
    z = np.asarray(targets)
    if z.shape != logits.data.shape:
        raise ValueError(f"target shape {z.shape} != logits shape {logits.data.shape}")
    if not np.isin(z, (0, 1)).all():
        raise ValueError("targets must be 0 or 1")
    u = logits.data
    z = z.astype(u.dtype)
    elem = np.maximum(u, 0) - u * z + np.log1p(np.exp(-np.abs(u)))
    batch = int(np.prod(u.shape[:-1])) if u.ndim > 1 else 1
    loss = elem.sum() / batch

    def backward(g):
        sig = 1.0 / (1.0 + np.exp(-u))
        return ((logits, (g * (sig - z) / batch).astype(u.dtype)),)

    return Tensor(np.asarray(loss, dtype=u.dtype), parents=(logits,), backward=backward)


def sigmoid(u: np.ndarray) -> np.ndarray:
    """Plain (non-differentiated) logistic function for post-model bridging."""
    out = np.empty_like(u, dtype=np.float64)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out
