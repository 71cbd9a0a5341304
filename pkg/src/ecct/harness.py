"""Monte Carlo BER/FER evaluation and attention-map inspection.

Protocol per SNR point: transmit random codewords in fixed-size batches
until both the frame minimum and the error-frame minimum are met (or the
hard cap is hit), counting exactly. Every batch draws from its own seeded
stream derived from (base seed, SNR index, batch index), so reports are
bitwise reproducible regardless of worker count; the stopping decision is
taken at batch boundaries in batch order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .bp import TannerGraph, bp_decode_batch, channel_llr
from .channel import RNG_ALGORITHM, ebno_to_sigma
from .codes import LinearCode, encode, ml_decode_batch
from .model import Checkpoint, decode_block, forward
from .transform import hard_decision, preprocess


class HardDecisionDecoder:
    """No correction at all: the hard decision of the channel output."""

    name = "hard-decision"

    def decode_batch(self, y: np.ndarray, sigma: float) -> np.ndarray:
        return hard_decision(y)


class MLDecoder:
    """Brute-force maximum-likelihood oracle (small k only)."""

    def __init__(self, code: LinearCode):
        self.code = code
        self.name = f"ml[{code.name}]"

    def decode_batch(self, y: np.ndarray, sigma: float) -> np.ndarray:
        return ml_decode_batch(self.code, y)


class BPDecoder:
    """Flooding sum-product decoding with a fixed iteration budget."""

    def __init__(self, code: LinearCode, iters: int, early_stop: bool = True):
        self.code = code
        self.graph = TannerGraph(code.H)
        self.iters = iters
        self.early_stop = early_stop
        self.name = f"bp[L={iters}{'' if early_stop else ',no-early-stop'}]"

    def decode_batch(self, y: np.ndarray, sigma: float) -> np.ndarray:
        res = bp_decode_batch(self.graph, channel_llr(y, sigma), self.iters,
                              early_stop=self.early_stop)
        return res.bits


class TransformerDecoder:
    """Trained (or freshly initialized) transformer checkpoint."""

    def __init__(self, ckpt: Checkpoint):
        self.ckpt = ckpt
        self.code = ckpt.code
        self.name = f"ecct[N={ckpt.config.layers},d={ckpt.config.dim},step={ckpt.step}]"

    def decode_batch(self, y: np.ndarray, sigma: float) -> np.ndarray:
        return decode_block(self.ckpt, y)


@dataclass(frozen=True)
class EvalConfig:
    snr_db: tuple
    min_frames: int = 100_000
    min_error_frames: int = 500
    max_frames: int = 10_000_000
    frames_per_batch: int = 4096
    base_seed: int = 0
    codeword_source: str = "random"  # or "zero"
    workers: int = 1

    def __post_init__(self):
        if len(self.snr_db) == 0:
            raise ValueError("empty SNR list")
        if self.min_frames < 1 or self.frames_per_batch < 1:
            raise ValueError("frame counts must be positive")
        if self.codeword_source not in ("random", "zero"):
            raise ValueError(f"unknown codeword source {self.codeword_source!r}")


@dataclass(frozen=True)
class SnrPoint:
    snr_db: float
    frames: int
    bit_errors: int
    frame_errors: int
    ber: float
    fer: float
    neg_ln_ber: float | None
    neg_ln_ber_is_lower_bound: bool
    ci95_half_width: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EvalReport:
    decoder: str
    code: str
    n: int
    k: int
    points: list[SnrPoint]
    base_seed: int
    wall_seconds: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["points"] = [p.to_dict() for p in self.points]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        points = [SnrPoint(**p) for p in d["points"]]
        return cls(decoder=d["decoder"], code=d["code"], n=d["n"], k=d["k"],
                   points=points, base_seed=d["base_seed"],
                   wall_seconds=d["wall_seconds"], metadata=d["metadata"])


def _make_point(snr_db: float, frames: int, bit_errors: int, frame_errors: int,
                n: int) -> SnrPoint:
    bits = frames * n
    ber = bit_errors / bits
    fer = frame_errors / frames
    if bit_errors > 0:
        neg_ln = -math.log(ber)
        lower_bound = False
    else:
        neg_ln = -math.log(1.0 / bits)  # one error in the observed bits: a lower bound
        lower_bound = True
    ci = 1.96 * math.sqrt(max(ber * (1.0 - ber), 0.0) / bits)
    return SnrPoint(snr_db=snr_db, frames=frames, bit_errors=bit_errors,
                    frame_errors=frame_errors, ber=ber, fer=fer, neg_ln_ber=neg_ln,
                    neg_ln_ber_is_lower_bound=lower_bound, ci95_half_width=ci)


class DecoderFailure(RuntimeError):
    """Decoder raised mid-run; records where, for reproduction."""

    def __init__(self, snr_db: float, batch_index: int, frame_offset: int, cause: Exception):
        self.snr_db = snr_db
        self.batch_index = batch_index
        self.frame_offset = frame_offset
        super().__init__(f"decoder failed at {snr_db} dB, batch {batch_index} "
                         f"(frames from {frame_offset}): {cause!r}")
        self.__cause__ = cause


def _run_batch(decoder, code: LinearCode, sigma: float, cfg: EvalConfig,
               snr_idx: int, batch_idx: int) -> tuple[int, int, int]:
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(cfg.base_seed, snr_idx, batch_idx)))
    b = cfg.frames_per_batch
    if cfg.codeword_source == "zero":
        x = np.zeros((b, code.n), dtype=np.uint8)
    else:
        x = encode(code, rng.integers(0, 2, size=(b, code.k), dtype=np.uint8))
    y = (1.0 - 2.0 * x) + sigma * rng.standard_normal((b, code.n))
    try:
        xhat = decoder.decode_batch(y, sigma)
    except Exception as exc:  # noqa: BLE001 - annotate and rethrow
        raise DecoderFailure(0.0, batch_idx, batch_idx * b, exc) from exc
    errs = xhat.astype(np.uint8) != x
    return b, int(errs.sum()), int(errs.any(axis=1).sum())


def run_ber(decoder, code: LinearCode, cfg: EvalConfig) -> EvalReport:
    """Evaluate a decoder over the configured SNR sweep."""
    t0 = time.time()
    points = []
    for snr_idx, snr in enumerate(cfg.snr_db):
        sigma = ebno_to_sigma(snr, code.rate)
        frames = bit_errors = frame_errors = 0
        batch_idx = 0

        def done() -> bool:
            if frames >= cfg.max_frames:
                return True
            return frames >= cfg.min_frames and frame_errors >= cfg.min_error_frames

        with ThreadPoolExecutor(max_workers=max(cfg.workers, 1)) as pool:
            while not done():
                wave = max(cfg.workers, 1)
                futures = [pool.submit(_run_batch, decoder, code, sigma, cfg,
                                       snr_idx, batch_idx + i) for i in range(wave)]
                for i, fut in enumerate(futures):
                    try:
                        f, be, fe = fut.result()
                    except DecoderFailure as df:
                        raise DecoderFailure(snr, batch_idx + i,
                                             (batch_idx + i) * cfg.frames_per_batch,
                                             df.__cause__) from df.__cause__
                    if done():
                        continue  # results past the stopping batch are discarded
                    frames += f
                    bit_errors += be
                    frame_errors += fe
                batch_idx += wave
        points.append(_make_point(snr, frames, bit_errors, frame_errors, code.n))
    return EvalReport(
        decoder=decoder.name, code=code.name, n=code.n, k=code.k, points=points,
        base_seed=cfg.base_seed, wall_seconds=time.time() - t0,
        metadata={"rng": RNG_ALGORITHM,
                  "seed_scheme": "seedseq(base_seed, snr_index, batch_index)",
                  "frames_per_batch": cfg.frames_per_batch,
                  "codeword_source": cfg.codeword_source,
                  "min_frames": cfg.min_frames,
                  "min_error_frames": cfg.min_error_frames,
                  "max_frames": cfg.max_frames,
                  "workers": cfg.workers})


REPORT_FORMATS = ("json", "csv", "table-text")

_CSV_COLUMNS = ("snr_db", "frames", "bit_errors", "frame_errors", "ber", "fer",
                "neg_ln_ber", "ci95")


def emit_report(report: EvalReport, fmt: str = "json") -> str:
    """Serialize a report. CSV columns are fixed; the text table lists -ln(BER) per SNR."""
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for p in report.points:
            writer.writerow([p.snr_db, p.frames, p.bit_errors, p.frame_errors,
                             f"{p.ber:.8g}", f"{p.fer:.8g}", f"{p.neg_ln_ber:.6g}",
                             f"{p.ci95_half_width:.6g}"])
        return buf.getvalue()
    if fmt == "table-text":
        head = f"{report.code}  decoder={report.decoder}  (-ln BER per SNR dB)"
        cols = "  ".join(f"{p.snr_db:>8.5g}" for p in report.points)
        vals = "  ".join(
            f"{p.neg_ln_ber:>7.2f}{'+' if p.neg_ln_ber_is_lower_bound else ' '}"
            for p in report.points)
        return f"{head}\n{'snr':>6} {cols}\n{'-lnBER':>6} {vals}\n"
    raise ValueError(f"unknown report format {fmt!r}; expected one of {REPORT_FORMATS}")


def parse_report_json(text: str) -> EvalReport:
    return EvalReport.from_dict(json.loads(text))


def emit_curve(report: EvalReport) -> str:
    """Gnuplot-friendly (snr, ber) pairs."""
    lines = [f"# code={report.code} decoder={report.decoder}", "# snr_db ber"]
    for p in report.points:
        lines.append(f"{p.snr_db:g} {p.ber:.8g}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AttentionDump:
    """Post-softmax attention map of one (layer, head), denied entries exactly zero."""

    layer: int
    head: int
    weights: np.ndarray
    column: np.ndarray
    column_index: int

    def to_dict(self) -> dict:
        return {"layer": self.layer, "head": self.head,
                "column_index": self.column_index,
                "weights": self.weights.tolist(),
                "column": self.column.tolist()}


def dump_attention(ckpt: Checkpoint, y, layer: int, head: int,
                   column: int = 0) -> AttentionDump:
    """Run one word through the model and extract an attention map slice."""
    from .channel import ReceivedWord
    if isinstance(y, ReceivedWord):
        y = y.y
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("dump_attention takes a single received word")
    if not 0 <= layer < ckpt.config.layers:
        raise IndexError(f"layer {layer} out of range 0..{ckpt.config.layers - 1}")
    if not 0 <= head < ckpt.config.heads:
        raise IndexError(f"head {head} out of range 0..{ckpt.config.heads - 1}")
    size = 2 * ckpt.code.n - ckpt.code.k
    if not 0 <= column < size:
        raise IndexError(f"column {column} out of range 0..{size - 1}")
    pre = preprocess(ckpt.code.H, y[None, :].astype(np.float32))
    _, maps = forward(ckpt.params, ckpt.config, ckpt.additive_mask(), pre,
                      collect_attention=True)
    weights = maps[layer][0, head].astype(np.float64)
    if ckpt.config.mask_mode == "algorithm1":
        weights = weights * ckpt.mask.allow  # clamp denied entries to exactly zero
    return AttentionDump(layer=layer, head=head, weights=weights,
                         column=weights[:, column].copy(), column_index=column)
