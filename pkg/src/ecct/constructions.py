"""Constructions for the bundled parity-check matrices.

Polar codes: frozen set from the Bhattacharyya-parameter recursion at a
design SNR; the parity-check matrix is a basis of the dual code (frozen
columns of the polar transform) reduced to low weight by greedy pairwise
sums, which is what makes belief propagation on it behave like the usual
Tanner-graph decoding of these codes.

LDPC codes: progressive edge growth with a fixed variable degree, which
spreads check degrees evenly and avoids short cycles where possible.

All constructions are deterministic given their seeds; the repository's
codes/ directory is generated from these and committed.
"""

from __future__ import annotations

import numpy as np

from .codes import as_binary_matrix, gf2_rank


def polar_transform(m: int) -> np.ndarray:
    """The m-fold Kronecker power of [[1,0],[1,1]] over GF(2), size 2^m."""
    f = np.array([[1, 0], [1, 1]], dtype=np.uint8)
    g = np.array([[1]], dtype=np.uint8)
    for _ in range(m):
        g = np.kron(g, f)
    return g


def bhattacharyya_reliabilities(n: int, design_ebno_db: float, rate: float) -> np.ndarray:
    """Bhattacharyya parameter of each synthetic channel (lower = more reliable).

    Starts from Z = exp(-rate * 10^(design/10)) for unit-energy BPSK on AWGN
    and applies the polarization recursion, tracked in the log domain so the
    good channels do not underflow.
    """
    if n < 2 or n & (n - 1):
        raise ValueError(f"block length must be a power of two >= 2, got {n}")
    # log Z; minus branch uses log(2z - z^2) = log z + log(2 - z), plus branch 2 log z
    logz = np.array([-rate * 10.0 ** (design_ebno_db / 10.0)])
    while logz.size < n:
        minus = logz + np.log(2.0 - np.exp(np.maximum(logz, -700)))
        plus = 2.0 * logz
        logz = np.concatenate([minus, plus])
    return logz


def polar_frozen_set(n: int, k: int, design_ebno_db: float = 2.0) -> np.ndarray:
    """Indices of the n-k least reliable synthetic channels (sorted)."""
    logz = bhattacharyya_reliabilities(n, design_ebno_db, rate=k / n)
    # least reliable = largest Z; stable argsort keeps ties deterministic
    order = np.argsort(-logz, kind="stable")
    return np.sort(order[: n - k])


def polar_parity_raw(n: int, k: int, design_ebno_db: float = 2.0) -> np.ndarray:
    """Dual-code basis straight from the transform: frozen columns, transposed."""
    frozen = polar_frozen_set(n, k, design_ebno_db)
    g = polar_transform(int(np.log2(n)))
    return g[:, frozen].T.copy()


def sparsify_parity(h: np.ndarray, max_rounds: int = 64) -> np.ndarray:
    """Reduce total row weight by greedy pairwise row sums over GF(2).

    Row spans (and hence the code) are preserved exactly; rank is asserted.
    Deterministic: rows are scanned in a fixed order and a replacement
    happens only on a strict weight decrease.
    """
    h = as_binary_matrix(h).copy()
    m = h.shape[0]
    for _ in range(max_rounds):
        improved = False
        weights = h.sum(axis=1)
        for i in range(m):
            sums = h ^ h[i]
            w = sums.sum(axis=1)
            w[i] = np.iinfo(w.dtype).max if np.issubdtype(w.dtype, np.integer) else 2 ** 31
            j = int(np.argmin(w))
            # replace the heavier row of the pair by the sum when strictly lighter
            if w[j] < max(weights[i], weights[j]):
                target = i if weights[i] >= weights[j] else j
                h[target] = sums[j]
                weights = h.sum(axis=1)
                improved = True
        if not improved:
            break
    if gf2_rank(h) != m:
        raise AssertionError("sparsification broke the row space rank")
    order = np.lexsort(h.T[::-1])
    return h[order]


def polar_parity(n: int, k: int, design_ebno_db: float = 2.0,
                 sparsify_rounds: int = 64) -> np.ndarray:
    """Low-weight dual-basis parity-check matrix of the polar (n, k) code."""
    return sparsify_parity(polar_parity_raw(n, k, design_ebno_db), sparsify_rounds)


def peg_ldpc_parity(n: int, m: int, var_degree: int = 3, seed: int = 0) -> np.ndarray:
    """Progressive-edge-growth LDPC parity-check matrix, m checks by n bits.

    Each variable gets var_degree edges; every edge goes to the check that
    is farthest in the current graph (breaking ties by lowest degree, then
    lowest index after a seeded shuffle), the standard greedy girth heuristic.
    Full row rank is required; a few retries reseed the shuffle.
    """
    rng = np.random.default_rng(seed)
    for attempt in range(32):
        h = _peg_attempt(n, m, var_degree, rng)
        if gf2_rank(h) == m:
            return h
    raise ValueError(f"PEG failed to reach full rank for ({n}, {m}) after 32 attempts")


def _peg_attempt(n: int, m: int, var_degree: int, rng: np.random.Generator) -> np.ndarray:
    check_nbrs: list[set[int]] = [set() for _ in range(m)]
    var_nbrs: list[set[int]] = [set() for _ in range(n)]
    check_deg = np.zeros(m, dtype=np.int64)
    for v in range(n):
        for _ in range(var_degree):
            unreached = _farthest_checks(v, var_nbrs, check_nbrs, m)
            candidates = unreached if unreached.size else np.setdiff1d(
                np.arange(m), np.fromiter(var_nbrs[v], dtype=np.int64, count=len(var_nbrs[v])))
            if candidates.size == 0:
                continue
            degs = check_deg[candidates]
            pool = candidates[degs == degs.min()]
            c = int(rng.choice(pool))
            check_nbrs[c].add(v)
            var_nbrs[v].add(c)
            check_deg[c] += 1
    h = np.zeros((m, n), dtype=np.uint8)
    for c, nbrs in enumerate(check_nbrs):
        for v in nbrs:
            h[c, v] = 1
    return h


def _farthest_checks(v: int, var_nbrs, check_nbrs, m: int) -> np.ndarray:
    """Checks at maximal (possibly infinite) BFS distance from variable v."""
    seen_checks = set(var_nbrs[v])
    seen_vars = {v}
    frontier = set(var_nbrs[v])
    while True:
        next_vars = set()
        for c in frontier:
            next_vars |= check_nbrs[c]
        next_vars -= seen_vars
        seen_vars |= next_vars
        next_frontier = set()
        for u in next_vars:
            next_frontier |= var_nbrs[u]
        next_frontier -= seen_checks
        if not next_frontier:
            break
        seen_checks |= next_frontier
        frontier = next_frontier
    unreached = np.array(sorted(set(range(m)) - seen_checks), dtype=np.int64)
    return unreached
