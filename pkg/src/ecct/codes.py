"""Binary linear block codes over GF(2).

Parity-check ingestion (alist format), generator derivation, encoding,
syndrome computation, and a brute-force maximum-likelihood oracle for
small codes.

Bit convention used project-wide: bit 0 maps to BPSK symbol +1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ML_MESSAGE_BITS_LIMIT = 20  # keeps the brute-force oracle under ~10^6 codeword scorings


class AlistError(ValueError):
    """Malformed alist text. Carries the 1-based line number of the offending line."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"alist line {line}: {message}")


def as_binary_matrix(a) -> np.ndarray:
    """Validate and return a 2-D uint8 matrix with entries in {0,1}."""
    m = np.asarray(a)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D binary matrix, got shape {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ValueError("matrix entries must be 0 or 1")
    return m.astype(np.uint8)


def gf2_rank(a: np.ndarray) -> int:
    """Rank of a binary matrix over GF(2)."""
    a = as_binary_matrix(a).copy()
    m, n = a.shape
    rank = 0
    for col in range(n):
        pivots = np.nonzero(a[rank:, col])[0]
        if pivots.size == 0:
            continue
        piv = rank + pivots[0]
        if piv != rank:
            a[[rank, piv]] = a[[piv, rank]]
        others = np.nonzero(a[:, col])[0]
        for r in others:
            if r != rank:
                a[r] ^= a[rank]
        rank += 1
        if rank == m:
            break
    return rank


def parse_alist(text: str) -> np.ndarray:
    """Parse alist text into a dense binary parity-check matrix.

    Format: line 1 "n m" (columns, rows); line 2 max column/row degrees;
    line 3 the n column degrees; line 4 the m row degrees; then n lines of
    1-based row indices per column and m lines of 1-based column indices
    per row. Zero entries are padding and are ignored. The column and row
    adjacency lists must describe the same matrix.
    """
    lines = text.splitlines()

    def ints(idx: int, what: str) -> list[int]:
        if idx >= len(lines):
            raise AlistError(idx + 1, f"file ends before {what}")
        try:
            return [int(tok) for tok in lines[idx].split()]
        except ValueError:
            raise AlistError(idx + 1, f"non-integer token in {what}") from None

    header = ints(0, "header")
    if len(header) != 2:
        raise AlistError(1, f"expected 'n m', got {len(header)} tokens")
    n, m = header
    if n < 1 or m < 1:
        raise AlistError(1, f"non-positive dimensions n={n} m={m}")

    maxdeg = ints(1, "max degrees")
    if len(maxdeg) != 2:
        raise AlistError(2, "expected 'max_col_degree max_row_degree'")

    col_deg = ints(2, "column degrees")
    if len(col_deg) != n:
        raise AlistError(3, f"expected {n} column degrees, got {len(col_deg)}")
    row_deg = ints(3, "row degrees")
    if len(row_deg) != m:
        raise AlistError(4, f"expected {m} row degrees, got {len(row_deg)}")
    if max(col_deg, default=0) > maxdeg[0]:
        raise AlistError(3, f"column degree exceeds declared maximum {maxdeg[0]}")
    if max(row_deg, default=0) > maxdeg[1]:
        raise AlistError(4, f"row degree exceeds declared maximum {maxdeg[1]}")

    h = np.zeros((m, n), dtype=np.uint8)
    for j in range(n):
        lineno = 4 + j
        entries = [e for e in ints(lineno, f"column {j + 1} indices") if e != 0]
        if len(entries) != col_deg[j]:
            raise AlistError(lineno + 1,
                             f"column {j + 1} lists {len(entries)} entries, degree says {col_deg[j]}")
        for e in entries:
            if not 1 <= e <= m:
                raise AlistError(lineno + 1, f"row index {e} out of range 1..{m}")
            h[e - 1, j] = 1

    for i in range(m):
        lineno = 4 + n + i
        entries = [e for e in ints(lineno, f"row {i + 1} indices") if e != 0]
        if len(entries) != row_deg[i]:
            raise AlistError(lineno + 1,
                             f"row {i + 1} lists {len(entries)} entries, degree says {row_deg[i]}")
        for e in entries:
            if not 1 <= e <= n:
                raise AlistError(lineno + 1, f"column index {e} out of range 1..{n}")
            if h[i, e - 1] != 1:
                raise AlistError(lineno + 1,
                                 f"row list has a one at column {e} absent from the column lists")
    if int(h.sum()) != sum(row_deg):
        line = 4 + n + 1
        raise AlistError(line, "row and column adjacency lists disagree")
    return h


def emit_alist(h: np.ndarray) -> str:
    """Serialize a binary matrix in alist format (entries zero-padded to the max degree)."""
    h = as_binary_matrix(h)
    m, n = h.shape
    col_deg = h.sum(axis=0).astype(int)
    row_deg = h.sum(axis=1).astype(int)
    max_col = int(col_deg.max())
    max_row = int(row_deg.max())
    out = [f"{n} {m}", f"{max_col} {max_row}",
           " ".join(str(d) for d in col_deg),
           " ".join(str(d) for d in row_deg)]
    for j in range(n):
        idx = (np.nonzero(h[:, j])[0] + 1).tolist()
        idx += [0] * (max_col - len(idx))
        out.append(" ".join(str(i) for i in idx))
    for i in range(m):
        idx = (np.nonzero(h[i])[0] + 1).tolist()
        idx += [0] * (max_row - len(idx))
        out.append(" ".join(str(j) for j in idx))
    return "\n".join(out) + "\n"


def _rref_rightmost(h: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduce over GF(2), choosing pivots from the rightmost columns.

    Returns the reduced matrix and the pivot columns (one per row, in pivot
    order). Scanning right to left leaves the leftmost possible columns
    free, so a systematic-form input [P | I] yields the textbook generator
    [I | P^T].
    """
    r = h.copy()
    m, n = r.shape
    pivots: list[int] = []
    row = 0
    for col in range(n - 1, -1, -1):
        hits = np.nonzero(r[row:, col])[0]
        if hits.size == 0:
            continue
        piv = row + hits[0]
        if piv != row:
            r[[row, piv]] = r[[piv, row]]
        for other in np.nonzero(r[:, col])[0]:
            if other != row:
                r[other] ^= r[row]
        pivots.append(col)
        row += 1
        if row == m:
            break
    return r, pivots


def generator_from_parity(h: np.ndarray) -> np.ndarray:
    """Derive a k x n generator matrix G with G H^T = 0 over GF(2).

    H must have full row rank; rank deficiency raises instead of silently
    dropping rows. Message bits land on the free (non-pivot) columns, so
    encoding is systematic on those positions.
    """
    h = as_binary_matrix(h)
    m, n = h.shape
    k = n - m
    r, pivots = _rref_rightmost(h)
    if len(pivots) < m:
        raise ValueError(
            f"parity-check matrix is rank-deficient over GF(2): rank {len(pivots)} < {m} rows")
    if k <= 0:
        raise ValueError(f"parity-check matrix {m}x{n} leaves no message bits")
    free = sorted(set(range(n)) - set(pivots))
    g = np.zeros((k, n), dtype=np.uint8)
    for row_idx, f in enumerate(free):
        g[row_idx, f] = 1
        for piv_row, p in enumerate(pivots):
            g[row_idx, p] = r[piv_row, f]
    return g


@dataclass(frozen=True)
class LinearCode:
    """A binary (n, k) linear block code given by its parity-check matrix."""

    n: int
    k: int
    H: np.ndarray
    G: np.ndarray
    name: str = "code"
    info_positions: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not 0 < self.k < self.n:
            raise ValueError(f"need 0 < k < n, got k={self.k} n={self.n}")
        if self.H.shape != (self.n - self.k, self.n):
            raise ValueError(f"H shape {self.H.shape} does not match ({self.n - self.k}, {self.n})")
        if self.G.shape != (self.k, self.n):
            raise ValueError(f"G shape {self.G.shape} does not match ({self.k}, {self.n})")
        if gf2_rank(self.H) != self.n - self.k:
            raise ValueError("H is rank-deficient over GF(2)")
        if ((self.G @ self.H.T) % 2).any():
            raise ValueError("G H^T != 0 over GF(2)")

    @property
    def rate(self) -> float:
        return self.k / self.n

    @classmethod
    def from_parity(cls, h, name: str = "code") -> "LinearCode":
        h = as_binary_matrix(h)
        m, n = h.shape
        g = generator_from_parity(h)
        _, pivots = _rref_rightmost(h)
        free = tuple(sorted(set(range(n)) - set(pivots)))
        return cls(n=n, k=n - m, H=h, G=g, name=name, info_positions=free)


def encode(code: LinearCode, message) -> np.ndarray:
    """Encode message bits: x = m G over GF(2). Accepts a (k,) vector or (batch, k)."""
    m = np.asarray(message)
    if m.shape[-1] != code.k:
        raise ValueError(f"message length {m.shape[-1]} != k={code.k}")
    if not np.isin(m, (0, 1)).all():
        raise ValueError("message bits must be 0 or 1")
    return (m.astype(np.uint8) @ code.G) % 2


def syndrome(h: np.ndarray, v) -> np.ndarray:
    """s = H v mod 2. Zero iff v is a codeword. Accepts (n,) or (batch, n)."""
    h = np.asarray(h, dtype=np.uint8)
    v = np.asarray(v)
    if v.shape[-1] != h.shape[1]:
        raise ValueError(f"vector length {v.shape[-1]} != n={h.shape[1]}")
    return (v.astype(np.uint8) @ h.T) % 2


def all_codewords(code: LinearCode) -> np.ndarray:
    """The full (2^k, n) codebook, messages enumerated in lexicographic order."""
    if code.k > ML_MESSAGE_BITS_LIMIT:
        raise ValueError(f"k={code.k} too large to enumerate (limit {ML_MESSAGE_BITS_LIMIT})")
    ints = np.arange(2 ** code.k, dtype=np.uint32)
    # bit 0 of the message vector is the most significant, so row order is lexicographic
    msgs = (ints[:, None] >> np.arange(code.k - 1, -1, -1)) & 1
    return encode(code, msgs.astype(np.uint8))


def ml_decode(code: LinearCode, y) -> np.ndarray:
    """Brute-force maximum-likelihood decoding under AWGN.

    Maximizes <BPSK(x), y> over all 2^k codewords. Ties resolve to the
    lexicographically smallest message, which makes the oracle
    deterministic. Refuses k > 20.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != code.n:
        raise ValueError(f"received length {y.shape[-1]} != n={code.n}")
    single = y.ndim == 1
    yb = y.reshape(1, -1) if single else y
    best = ml_decode_batch(code, yb)
    return best[0] if single else best


def ml_decode_batch(code: LinearCode, Y: np.ndarray) -> np.ndarray:
    """Vectorized ML decoding of a (batch, n) block of received words."""
    if code.k > ML_MESSAGE_BITS_LIMIT:
        raise ValueError(f"k={code.k} too large to enumerate (limit {ML_MESSAGE_BITS_LIMIT})")
    Y = np.asarray(Y, dtype=np.float64)
    nwords = 2 ** code.k
    chunk = min(nwords, 1 << 14)
    best_score = np.full(Y.shape[0], -np.inf)
    best_idx = np.zeros(Y.shape[0], dtype=np.int64)
    ints = np.arange(nwords, dtype=np.uint32)
    shifts = np.arange(code.k - 1, -1, -1)
    for start in range(0, nwords, chunk):
        idx = ints[start:start + chunk]
        msgs = ((idx[:, None] >> shifts) & 1).astype(np.uint8)
        cb = 1.0 - 2.0 * encode(code, msgs)
        scores = Y @ cb.T
        local_best = np.argmax(scores, axis=1)  # first max: lexicographic tie-break
        local_score = scores[np.arange(Y.shape[0]), local_best]
        better = local_score > best_score
        best_score[better] = local_score[better]
        best_idx[better] = start + local_best[better]
    msgs = ((best_idx[:, None] >> shifts) & 1).astype(np.uint8)
    return encode(code, msgs)


_HAMMING_P = np.array([[1, 1, 0, 1],
                       [1, 0, 1, 1],
                       [0, 1, 1, 1]], dtype=np.uint8)

_BUILTIN_PARITY = {
    "hamming_7_4": np.hstack([_HAMMING_P, np.eye(3, dtype=np.uint8)]),
    "repetition_2_1": np.array([[1, 1]], dtype=np.uint8),
    "single_parity_3_2": np.array([[1, 1, 1]], dtype=np.uint8),
}


def builtin_code_names() -> list[str]:
    return sorted(_BUILTIN_PARITY)


def load_code(source: str) -> LinearCode:
    """Resolve a code from a registry name or an alist file path."""
    if source in _BUILTIN_PARITY:
        return LinearCode.from_parity(_BUILTIN_PARITY[source], name=source)
    try:
        with open(source, "r", encoding="ascii") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValueError(
            f"unknown code {source!r}: not a registry name {builtin_code_names()} "
            f"and not a readable alist file ({exc})") from exc
    stem = source.rsplit("/", 1)[-1]
    stem = stem[:-6] if stem.endswith(".alist") else stem
    return LinearCode.from_parity(parse_alist(text), name=stem)
