"""Command-line surface: train, evaluate, inspect masks and attention maps.

Flags mirror the usual knobs by name (--layers for N, --dim for d, --iters
for BP L, SNR always E_b/N_0 in dB). Every artifact-producing run writes
its fully resolved configuration next to its outputs. A JSON config file
given with --config overrides flags; the ECCT_SEED environment variable is
the fallback seed when --seed is absent.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .codes import builtin_code_names, load_code
from .harness import (
    BPDecoder,
    EvalConfig,
    HardDecisionDecoder,
    MLDecoder,
    TransformerDecoder,
    dump_attention,
    emit_curve,
    emit_report,
    run_ber,
)
from .mask import build_mask, mask_stats, render_allow_grid
from .model import (
    Checkpoint,
    ModelConfig,
    TrainSchedule,
    load_checkpoint,
    parameter_count,
    train,
)

DEFAULT_SEED = 0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract wants 1
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (fallback: ECCT_SEED env var, then 0)")
    p.add_argument("--config", type=str, default=None,
                   help="JSON file whose values override the flags")
    p.add_argument("--out", type=str, default=None, help="output directory")


def build_parser() -> _Parser:
    ap = _Parser(prog="ecct", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a transformer decoder")
    t.add_argument("--code", required=True,
                   help=f"registry name ({', '.join(builtin_code_names())}) or alist path")
    t.add_argument("--layers", type=int, default=2, help="decoder layers N")
    t.add_argument("--dim", type=int, default=32, help="embedding dimension d")
    t.add_argument("--heads", type=int, default=8)
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--minibatches", type=int, default=200, help="minibatches per epoch")
    t.add_argument("--batch", type=int, default=128)
    t.add_argument("--snr-set", type=str, default="3,4,5,6,7",
                   help="training E_b/N_0 values in dB, comma separated")
    t.add_argument("--snr-continuous", action="store_true",
                   help="draw SNR uniformly across the set's range instead of the integer set")
    t.add_argument("--mask-mode", choices=("algorithm1", "unmasked"), default="algorithm1")
    t.add_argument("--attn-scale", choices=("d_h", "d"), default="d_h")
    t.add_argument("--resume", type=str, default=None, help="checkpoint to continue from")
    _add_common(t)

    for name, help_text in (("eval", "evaluate any decoder"),
                            ("bp-eval", "evaluate belief propagation"),
                            ("ml-eval", "evaluate the brute-force ML oracle")):
        e = sub.add_parser(name, help=help_text)
        if name == "eval":
            e.add_argument("--decoder", choices=("ecct", "bp", "ml", "hard"), required=True)
        e.add_argument("--code", default=None, help="registry name or alist path")
        e.add_argument("--ckpt", default=None, help="checkpoint path (ecct decoder)")
        e.add_argument("--iters", type=int, default=5, help="BP iterations L")
        e.add_argument("--no-early-stop", action="store_true",
                       help="run all BP iterations even after the syndrome clears")
        e.add_argument("--snr", type=str, required=True, help="comma-separated E_b/N_0 dB list")
        e.add_argument("--min-frames", type=int, default=100_000)
        e.add_argument("--min-error-frames", type=int, default=500)
        e.add_argument("--max-frames", type=int, default=10_000_000)
        e.add_argument("--batch-frames", type=int, default=4096)
        e.add_argument("--codeword-source", choices=("random", "zero"), default="random")
        e.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        e.add_argument("--format", choices=("json", "csv", "table-text"), default="table-text")
        e.add_argument("--curve-out", type=str, default=None,
                       help="also write gnuplot-style (snr, ber) data here")
        _add_common(e)

    m = sub.add_parser("mask-stats", help="attention-mask sparsity statistics as JSON")
    m.add_argument("--code", required=True)
    m.add_argument("--grid", action="store_true", help="also dump the allow table as text")
    _add_common(m)

    a = sub.add_parser("attn-dump", help="post-softmax attention map for one layer/head")
    a.add_argument("--ckpt", required=True)
    a.add_argument("--layer", type=int, default=0)
    a.add_argument("--head", type=int, default=0)
    a.add_argument("--column", type=int, default=0, help="column slice to extract")
    a.add_argument("--corrupt-bit", type=int, default=None,
                   help="flip this bit of the noiseless zero codeword before decoding")
    a.add_argument("--corrupt-value", type=float, default=-0.5,
                   help="received value planted at the corrupted bit")
    a.add_argument("--ebno", type=float, default=None,
                   help="add channel noise at this E_b/N_0 instead of the noiseless word")
    _add_common(a)

    c = sub.add_parser("ckpt-info", help="checkpoint summary as JSON")
    c.add_argument("ckpt", help="checkpoint path")
    _add_common(c)
    return ap


def _apply_config_file(args: argparse.Namespace):
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            overrides = json.load(fh)
        for key, value in overrides.items():
            attr = key.replace("-", "_")
            if not hasattr(args, attr):
                raise UsageError(f"config file sets unknown option {key!r}")
            setattr(args, attr, value)


def _seed_of(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("ECCT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"ECCT_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "command" and v is not None}


def _write_provenance(args, outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    resolved = _resolved(args)
    resolved["seed"] = _seed_of(args)
    with open(outdir / "resolved_config.json", "w", encoding="utf-8") as fh:
        json.dump({"command": args.command, **resolved}, fh, indent=2)
        fh.write("\n")


def _snr_list(text: str) -> tuple:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise UsageError(f"bad SNR list {text!r}") from None


def _cmd_train(args) -> int:
    seed = _seed_of(args)
    code = load_code(args.code)
    config = ModelConfig(layers=args.layers, dim=args.dim, heads=args.heads,
                         attn_scale=args.attn_scale, mask_mode=args.mask_mode)
    snr_set = tuple(int(s) if float(s).is_integer() else float(s)
                    for s in _snr_list(args.snr_set))
    schedule = TrainSchedule(epochs=args.epochs, minibatches_per_epoch=args.minibatches,
                             batch_size=args.batch, snr_set=snr_set,
                             snr_continuous=args.snr_continuous)
    resume = load_checkpoint(args.resume) if args.resume else None
    outdir = Path(args.out or f"runs/train_{code.name}_N{args.layers}_d{args.dim}")
    _write_provenance(args, outdir)

    def report(step, total, loss):
        print(f"step {step}/{total}  loss {loss:.4f}", flush=True)

    ckpt = train(code, config, schedule, seed=seed, resume_from=resume,
                 progress={"every": max(schedule.total_steps // 20, 1), "fn": report})
    ckpt_path = outdir / "checkpoint.npz"
    ckpt.save(str(ckpt_path))
    with open(outdir / "loss.csv", "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for i, v in enumerate(ckpt.loss_history):
            fh.write(f"{i},{v:.6f}\n")
    print(f"checkpoint: {ckpt_path} ({parameter_count(ckpt.params)} parameters, "
          f"step {ckpt.step})")
    return 0


def _make_decoder(kind: str, args, code):
    if kind == "ecct":
        if not args.ckpt:
            raise UsageError("--ckpt is required for the ecct decoder")
        ckpt = load_checkpoint(args.ckpt)
        return TransformerDecoder(ckpt), ckpt.code
    if code is None:
        raise UsageError("--code is required for this decoder")
    if kind == "bp":
        return BPDecoder(code, iters=args.iters, early_stop=not args.no_early_stop), code
    if kind == "ml":
        return MLDecoder(code), code
    if kind == "hard":
        return HardDecisionDecoder(), code
    raise UsageError(f"unknown decoder {kind!r}")


def _cmd_eval(args, forced_decoder: str | None = None) -> int:
    seed = _seed_of(args)
    kind = forced_decoder or args.decoder
    code = load_code(args.code) if args.code else None
    decoder, code = _make_decoder(kind, args, code)
    cfg = EvalConfig(snr_db=_snr_list(args.snr), min_frames=args.min_frames,
                     min_error_frames=args.min_error_frames, max_frames=args.max_frames,
                     frames_per_batch=args.batch_frames, base_seed=seed,
                     codeword_source=args.codeword_source, workers=args.workers)
    report = run_ber(decoder, code, cfg)
    text = emit_report(report, args.format)
    sys.stdout.write(text)
    if args.out:
        outdir = Path(args.out)
        _write_provenance(args, outdir)
        (outdir / "report.json").write_text(emit_report(report, "json"), encoding="utf-8")
        (outdir / "report.csv").write_text(emit_report(report, "csv"), encoding="utf-8")
    if args.curve_out:
        Path(args.curve_out).write_text(emit_curve(report), encoding="utf-8")
    return 0


def _cmd_mask_stats(args) -> int:
    code = load_code(args.code)
    mask = build_mask(code.H)
    stats = mask_stats(mask, code.H)
    payload = {"code": code.name, "n": code.n, "k": code.k, **stats.to_dict()}
    print(json.dumps(payload, indent=2))
    if args.grid:
        print(render_allow_grid(mask), end="")
    if args.out:
        outdir = Path(args.out)
        _write_provenance(args, outdir)
        (outdir / "mask_stats.json").write_text(json.dumps(payload, indent=2) + "\n",
                                                encoding="utf-8")
    return 0


def _cmd_attn_dump(args) -> int:
    seed = _seed_of(args)
    ckpt = load_checkpoint(args.ckpt)
    n = ckpt.code.n
    y = np.ones(n)
    if args.ebno is not None:
        rng = np.random.default_rng(seed)
        from .channel import ebno_to_sigma
        y = y + ebno_to_sigma(args.ebno, ckpt.code.rate) * rng.standard_normal(n)
    if args.corrupt_bit is not None:
        if not 0 <= args.corrupt_bit < n:
            raise UsageError(f"--corrupt-bit out of range 0..{n - 1}")
        y[args.corrupt_bit] = args.corrupt_value
    dump = dump_attention(ckpt, y, layer=args.layer, head=args.head, column=args.column)
    payload = {"input": y.tolist(), **dump.to_dict()}
    print(json.dumps(payload))
    if args.out:
        outdir = Path(args.out)
        _write_provenance(args, outdir)
        (outdir / "attention.json").write_text(json.dumps(payload, indent=2) + "\n",
                                               encoding="utf-8")
    return 0


def _cmd_ckpt_info(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    losses = ckpt.loss_history
    info = {
        "code": ckpt.code.name,
        "n": ckpt.code.n,
        "k": ckpt.code.k,
        "config": asdict(ckpt.config),
        "schedule": asdict(ckpt.schedule),
        "step": ckpt.step,
        "seed": ckpt.seed,
        "parameters": parameter_count(ckpt.params),
        "adam": {"step": ckpt.adam.step, "beta1": ckpt.adam.beta1,
                 "beta2": ckpt.adam.beta2, "eps": ckpt.adam.eps},
        "loss_first_100": float(losses[:100].mean()) if losses.size else None,
        "loss_last_100": float(losses[-100:].mean()) if losses.size else None,
        "metadata": ckpt.metadata,
    }
    print(json.dumps(info, indent=2))
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bp-eval": lambda a: _cmd_eval(a, forced_decoder="bp"),
    "ml-eval": lambda a: _cmd_eval(a, forced_decoder="ml"),
    "mask-stats": _cmd_mask_stats,
    "attn-dump": _cmd_attn_dump,
    "ckpt-info": _cmd_ckpt_info,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
