"""The transformer decoder: reliability-scaled positional embedding, pre-norm
decoder layers with code-aware masked attention, the two-layer output head,
parameter initialization, training on the zero codeword, and checkpointing.

The model predicts the binary multiplicative noise from [|y|, s(y)]; the
logit-to-sign bridge 1 - 2*sigmoid(u) feeds the postprocessing product rule.
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .channel import RNG_ALGORITHM, ebno_to_sigma
from .codes import LinearCode
from .mask import AttentionMask, build_mask
from .optim import AdamState, LrSchedule, adam_step
from .transform import PreprocessedWord, hard_decision, postprocess, preprocess

CHECKPOINT_FORMAT_VERSION = 1

DEFAULT_SNR_SET = (3, 4, 5, 6, 7)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs. The decoder is defined by layers N and embedding dim d."""

    layers: int
    dim: int
    heads: int = 8
    ffn_mult: int = 4
    attn_scale: str = "d_h"  # "d_h": per-head sqrt(d/h); "d": sqrt(d)
    mask_mode: str = "algorithm1"  # or "unmasked" for the ablation

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("need at least one decoder layer")
        if self.dim % self.heads != 0:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.attn_scale not in ("d_h", "d"):
            raise ValueError(f"unknown attn_scale {self.attn_scale!r}")
        if self.mask_mode not in ("algorithm1", "unmasked"):
            raise ValueError(f"unknown mask_mode {self.mask_mode!r}")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    def scale_value(self) -> float:
        return float(np.sqrt(self.dim if self.attn_scale == "d" else self.head_dim))


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int
    minibatches_per_epoch: int
    batch_size: int = 128
    snr_set: tuple = DEFAULT_SNR_SET
    snr_continuous: bool = False
    lr_start: float = 1e-4
    lr_end: float = 5e-7

    def __post_init__(self):
        if self.epochs < 0 or self.minibatches_per_epoch < 1 or self.batch_size < 1:
            raise ValueError("invalid schedule")
        if len(self.snr_set) == 0:
            raise ValueError("empty SNR set")

    @property
    def total_steps(self) -> int:
        return self.epochs * self.minibatches_per_epoch


def init_params(code: LinearCode, config: ModelConfig, rng: np.random.Generator,
                dtype=np.float32) -> dict[str, Tensor]:
    """Fan-in scaled uniform init for linear maps, N(0, 1/sqrt(d)) embedding,
    unit/zero layer norms. Deterministic per rng state."""
    s = 2 * code.n - code.k
    d = config.dim
    params: dict[str, Tensor] = {}

    def linear(name: str, fan_in: int, fan_out: int):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"{name}.w"] = ad.parameter(
            rng.uniform(-bound, bound, size=(fan_in, fan_out)), dtype)
        params[f"{name}.b"] = ad.parameter(
            rng.uniform(-bound, bound, size=(fan_out,)), dtype)

    def norm(name: str):
        params[f"{name}.gain"] = ad.parameter(np.ones(d), dtype)
        params[f"{name}.bias"] = ad.parameter(np.zeros(d), dtype)

    params["embed.w"] = ad.parameter(rng.normal(0.0, 1.0 / np.sqrt(d), size=(s, d)), dtype)
    for i in range(config.layers):
        norm(f"layer{i}.ln_attn")
        for proj in ("q", "k", "v", "o"):
            linear(f"layer{i}.attn.{proj}", d, d)
        norm(f"layer{i}.ln_ffn")
        hidden = config.ffn_mult * d
        linear(f"layer{i}.ffn.gate", d, hidden)
        linear(f"layer{i}.ffn.lin", d, hidden)
        linear(f"layer{i}.ffn.out", hidden, d)
    norm("final_ln")
    linear("head.reduce", d, 1)   # element-wise d -> 1, weights shared across positions
    # final projection starts near the "no flips" prior: logits ~ -0.1, so the
    # fresh model behaves like the hard decision and its loss sits near n*ln2
    params["head.project.w"] = ad.parameter(
        rng.uniform(-0.02, 0.02, size=(s, code.n)), dtype)
    params["head.project.b"] = ad.parameter(np.full(code.n, -0.1), dtype)
    return params


def parameter_count(params: dict[str, Tensor]) -> int:
    return int(sum(p.data.size for p in params.values()))


def embed(pre: PreprocessedWord, table: Tensor) -> Tensor:
    """Scale each position's learned vector by |y_i| (bits) or 1-2*s_j (checks)."""
    mag = np.asarray(pre.magnitude)
    syn = np.asarray(pre.synd)
    scale = np.concatenate([mag, 1.0 - 2.0 * syn.astype(mag.dtype)], axis=-1)
    if scale.shape[-1] != table.data.shape[0]:
        raise ValueError(f"embedding table has {table.data.shape[0]} rows, "
                         f"input has {scale.shape[-1]} positions")
    scale = scale.astype(table.data.dtype)
    return ad.mul(Tensor(scale[..., None]), table)


def forward(params: dict[str, Tensor], config: ModelConfig, additive_mask: np.ndarray,
            pre: PreprocessedWord, collect_attention: bool = False):
    """Run the decoder stack; returns logits (batch, n) as a Tensor.

    With collect_attention=True also returns the per-layer post-softmax
    attention maps as plain arrays [(batch, heads, S, S), ...].
    """
    x = embed(pre, params["embed.w"])
    if x.data.ndim == 2:
        x = ad.reshape(x, (1,) + x.data.shape)
    batch, s, d = x.data.shape
    h = config.heads
    hd = config.head_dim
    scale = config.scale_value()
    maps = []

    for i in range(config.layers):
        normed = ad.layer_norm(x, params[f"layer{i}.ln_attn.gain"],
                               params[f"layer{i}.ln_attn.bias"])

        def heads_of(t: Tensor) -> Tensor:
            return ad.transpose(ad.reshape(t, (batch, s, h, hd)), (0, 2, 1, 3))

        q = heads_of(ad.affine(normed, params[f"layer{i}.attn.q.w"], params[f"layer{i}.attn.q.b"]))
        k = heads_of(ad.affine(normed, params[f"layer{i}.attn.k.w"], params[f"layer{i}.attn.k.b"]))
        v = heads_of(ad.affine(normed, params[f"layer{i}.attn.v.w"], params[f"layer{i}.attn.v.b"]))
        attended, probs = ad.masked_attention(q, k, v, additive_mask, scale, return_probs=True)
        if collect_attention:
            maps.append(probs.data.copy())
        merged = ad.reshape(ad.transpose(attended, (0, 2, 1, 3)), (batch, s, d))
        x = ad.add(x, ad.affine(merged, params[f"layer{i}.attn.o.w"], params[f"layer{i}.attn.o.b"]))

        normed = ad.layer_norm(x, params[f"layer{i}.ln_ffn.gain"], params[f"layer{i}.ln_ffn.bias"])
        ffn = ad.geglu_ffn(normed,
                           params[f"layer{i}.ffn.gate.w"], params[f"layer{i}.ffn.gate.b"],
                           params[f"layer{i}.ffn.lin.w"], params[f"layer{i}.ffn.lin.b"],
                           params[f"layer{i}.ffn.out.w"], params[f"layer{i}.ffn.out.b"])
        x = ad.add(x, ffn)

    x = ad.layer_norm(x, params["final_ln.gain"], params["final_ln.bias"])
    reduced = ad.reshape(ad.affine(x, params["head.reduce.w"], params["head.reduce.b"]),
                         (batch, s))
    logits = ad.affine(reduced, params["head.project.w"], params["head.project.b"])
    if not np.isfinite(logits.data).all():
        raise FloatingPointError("non-finite activation at the output head")
    if collect_attention:
        return logits, maps
    return logits


def logits_to_soft_noise(logits: np.ndarray) -> np.ndarray:
    """Signed noise estimate in (-1, 1): +1 means confidently 'no flip'.

    The model trains flip probabilities sigma(u); the product rule of the
    postprocessing needs a sign, and 1 - 2*sigma(u) is the monotone bridge
    that sends u=0 to neutral 0.
    """
    return 1.0 - 2.0 * ad.sigmoid(logits)


@dataclass
class Checkpoint:
    """Everything needed to resume or evaluate a training run bit-exactly."""

    config: ModelConfig
    code: LinearCode
    params: dict[str, Tensor]
    adam: AdamState
    step: int
    schedule: TrainSchedule
    seed: int
    rng_state: dict
    loss_history: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def mask(self) -> AttentionMask:
        return build_mask(self.code.H)

    def additive_mask(self, dtype=np.float32) -> np.ndarray:
        if self.config.mask_mode == "unmasked":
            size = 2 * self.code.n - self.code.k
            return np.zeros((size, size), dtype=dtype)
        return self.mask.additive(dtype)

    def save(self, path: str) -> None:
        save_checkpoint(self, path)

    @classmethod
    def load(cls, path: str) -> "Checkpoint":
        return load_checkpoint(path)


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Write a versioned .npz: JSON header plus shape-tagged parameter arrays."""
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(ckpt.config),
        "schedule": asdict(ckpt.schedule),
        "code_name": ckpt.code.name,
        "step": ckpt.step,
        "seed": ckpt.seed,
        "rng_state": ckpt.rng_state,
        "adam": {"step": ckpt.adam.step, "beta1": ckpt.adam.beta1,
                 "beta2": ckpt.adam.beta2, "eps": ckpt.adam.eps},
        "metadata": ckpt.metadata,
        "param_names": list(ckpt.params.keys()),
    }
    arrays = {
        "header_json": np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
        "code_H": ckpt.code.H,
        "loss_history": ckpt.loss_history.astype(np.float32),
    }
    for name, p in ckpt.params.items():
        arrays[f"param:{name}"] = p.data
        arrays[f"adam_m:{name}"] = ckpt.adam.m[name]
        arrays[f"adam_v:{name}"] = ckpt.adam.v[name]
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_checkpoint(path: str) -> Checkpoint:
    with np.load(path) as data:
        header = json.loads(bytes(data["header_json"]).decode())
        if header["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {header['format_version']}")
        config = ModelConfig(**header["config"])
        schedule = TrainSchedule(**{k: tuple(v) if k == "snr_set" else v
                                    for k, v in header["schedule"].items()})
        code = LinearCode.from_parity(data["code_H"], name=header["code_name"])
        params = {}
        adam_m = {}
        adam_v = {}
        for name in header["param_names"]:
            params[name] = Tensor(data[f"param:{name}"].copy(), requires_grad=True)
            adam_m[name] = data[f"adam_m:{name}"].copy()
            adam_v[name] = data[f"adam_v:{name}"].copy()
        adam = AdamState(m=adam_m, v=adam_v, step=header["adam"]["step"],
                         beta1=header["adam"]["beta1"], beta2=header["adam"]["beta2"],
                         eps=header["adam"]["eps"])
        return Checkpoint(config=config, code=code, params=params, adam=adam,
                          step=header["step"], schedule=schedule, seed=header["seed"],
                          rng_state=header["rng_state"],
                          loss_history=data["loss_history"].copy(),
                          metadata=header["metadata"])


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; carries the checkpoint of the previous step."""

    def __init__(self, step: int, checkpoint: Checkpoint):
        self.checkpoint = checkpoint
        super().__init__(f"training loss became non-finite at step {step}")


def train(code: LinearCode, config: ModelConfig, schedule: TrainSchedule, seed: int = 0,
          resume_from: Checkpoint | None = None, dtype=np.float32,
          progress=None, stop_after_step: int | None = None) -> Checkpoint:
    """Train on noisy versions of the zero codeword.

    Each minibatch draws one SNR from the schedule's set (uniform over the
    integer set by default, continuous across its range with
    snr_continuous), transmits the all-zero codeword, and minimizes binary
    cross-entropy against the hard-decision flip targets. Cosine decay per
    minibatch. Returns a checkpoint that resumes bit-exactly.
    """
    if resume_from is not None:
        ckpt = resume_from
        params = ckpt.params
        adam = ckpt.adam
        rng = np.random.default_rng()
        rng.bit_generator.state = ckpt.rng_state
        start_step = ckpt.step
        losses = list(ckpt.loss_history)
    else:
        rng = np.random.default_rng(seed)
        params = init_params(code, config, rng, dtype)
        adam = AdamState.for_params(params)
        start_step = 0
        losses = []

    lr_schedule = LrSchedule(total_steps=max(schedule.total_steps, 1),
                             lr_start=schedule.lr_start, lr_end=schedule.lr_end)
    additive = _training_mask(code, config, dtype)
    snr_lo, snr_hi = min(schedule.snr_set), max(schedule.snr_set)
    t0 = time.time()

    def snapshot(step: int) -> Checkpoint:
        return Checkpoint(config=config, code=code, params=params, adam=adam,
                          step=step, schedule=schedule, seed=seed,
                          rng_state=rng.bit_generator.state,
                          loss_history=np.asarray(losses, dtype=np.float32),
                          metadata={"rng": RNG_ALGORITHM,
                                    "lr_start": schedule.lr_start,
                                    "lr_end": schedule.lr_end,
                                    "train_seconds": time.time() - t0})

    end_step = schedule.total_steps if stop_after_step is None else min(
        stop_after_step, schedule.total_steps)
    for step in range(start_step, end_step):
        if schedule.snr_continuous:
            ebno = float(rng.uniform(snr_lo, snr_hi))
        else:
            ebno = float(schedule.snr_set[rng.integers(len(schedule.snr_set))])
        sigma = ebno_to_sigma(ebno, code.rate)
        y = 1.0 + sigma * rng.standard_normal((schedule.batch_size, code.n))
        y = y.astype(dtype)
        targets = hard_decision(y)  # zero-codeword specialization of bin(y * x_s)
        pre = PreprocessedWord(magnitude=np.abs(y), synd=(targets @ code.H.T) % 2)

        for p in params.values():
            p.zero_grad()
        loss = ad.bce_with_logits(forward(params, config, additive, pre), targets)
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            raise TrainingDiverged(step, snapshot(step))
        loss.backward()
        adam_step(params, adam, lr_schedule.at(step))
        losses.append(loss_val)
        if progress is not None and (step + 1) % progress.get("every", 200) == 0:
            progress["fn"](step + 1, schedule.total_steps, loss_val)

    return snapshot(end_step)


def _training_mask(code: LinearCode, config: ModelConfig, dtype) -> np.ndarray:
    if config.mask_mode == "unmasked":
        size = 2 * code.n - code.k
        return np.zeros((size, size), dtype=dtype)
    return build_mask(code.H).additive(dtype)


def decode_word(ckpt: Checkpoint, y) -> np.ndarray:
    """Full receive chain: preprocess, forward, sign bridge, postprocess."""
    from .channel import ReceivedWord
    if isinstance(y, ReceivedWord):
        y = y.y
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    yb = y[None, :] if single else y
    xhat = decode_block(ckpt, yb)
    return xhat[0] if single else xhat


def decode_block(ckpt: Checkpoint, y_block: np.ndarray,
                 dtype=np.float32) -> np.ndarray:
    """Vectorized decode of a (batch, n) block of received words."""
    pre = preprocess(ckpt.code.H, y_block.astype(dtype))
    logits = forward(ckpt.params, ckpt.config, ckpt.additive_mask(dtype), pre)
    soft = logits_to_soft_noise(logits.data)
    return postprocess(y_block, soft)
