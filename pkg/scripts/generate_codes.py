#!/usr/bin/env python3
"""Regenerate the bundled parity-check matrices in codes/.

Polar codes use the frozen-column dual basis of the polar transform
(design E_b/N_0 = 2 dB), the representation whose plain-BP behavior
matches the usual published baselines for these benchmark codes. LDPC
codes are progressive-edge-growth constructions with fixed variable
degree. Everything is deterministic; run from the repository root.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ecct.codes import LinearCode, emit_alist  # noqa: E402
from ecct.constructions import peg_ldpc_parity, polar_parity_raw  # noqa: E402

POLAR = [(64, 32), (64, 48), (128, 64), (128, 86), (128, 96)]
LDPC = [("ldpc_49_24", 49, 25, 3), ("ldpc_96_48", 96, 48, 3),
        ("ldpc_121_60", 121, 61, 3), ("ldpc_121_70", 121, 51, 3),
        ("ldpc_121_80", 121, 41, 3), ("ldpc_128_64", 128, 64, 5)]


def main():
    outdir = Path(__file__).resolve().parents[1] / "codes"
    outdir.mkdir(exist_ok=True)
    for n, k in POLAR:
        h = polar_parity_raw(n, k, design_ebno_db=2.0)
        LinearCode.from_parity(h)  # sanity: full rank, generator exists
        path = outdir / f"polar_{n}_{k}.alist"
        path.write_text(emit_alist(h), encoding="ascii")
        print(f"wrote {path} (ones={int(h.sum())})")
    for name, n, m, dv in LDPC:
        h = peg_ldpc_parity(n, m, var_degree=dv, seed=42)
        LinearCode.from_parity(h)
        path = outdir / f"{name}.alist"
        path.write_text(emit_alist(h), encoding="ascii")
        print(f"wrote {path} (ones={int(h.sum())})")


if __name__ == "__main__":
    main()
