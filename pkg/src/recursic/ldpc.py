"""Small generic LDPC code: alist parsing, systematic encoding, and
flooding normalized min-sum decoding.

LLR inputs follow the package convention (positive favors bit 0), which is
the native orientation of the min-sum check-node rule, so no sign flip
happens at this boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class AlistError(ValueError):
    """Raised on malformed alist documents."""


class EncodingError(ValueError):
    """Raised when a parity-check matrix cannot support systematic encoding."""


@dataclass(frozen=True)
class ParityCheckMatrix:
    """Sparse binary parity-check matrix with n variables and m checks."""

    n: int
    m: int
    var_neighbors: tuple  # per variable: tuple of check indices
    check_neighbors: tuple  # per check: tuple of variable indices

    def dense(self) -> np.ndarray:
        h = np.zeros((self.m, self.n), dtype=np.uint8)
        for check, cols in enumerate(self.check_neighbors):
            h[check, list(cols)] = 1
        return h


def from_dense(h: np.ndarray) -> ParityCheckMatrix:
    h = np.asarray(h, dtype=np.uint8)
    m, n = h.shape
    var_nb = tuple(tuple(np.nonzero(h[:, v])[0].tolist()) for v in range(n))
    check_nb = tuple(tuple(np.nonzero(h[c, :])[0].tolist()) for c in range(m))
    if any(len(nb) == 0 for nb in var_nb) or any(len(nb) == 0 for nb in check_nb):
        raise AlistError("matrix has an empty row or column")
    return ParityCheckMatrix(n=n, m=m, var_neighbors=var_nb, check_neighbors=check_nb)


def _read_ints(token_lines: list[str], count: int, what: str) -> list[int]:
    if len(token_lines) < count:
        raise AlistError(f"truncated document while reading {what}")
    taken = token_lines[:count]
    del token_lines[:count]
    return taken


def parse_alist(text: str) -> ParityCheckMatrix:
    """Parse the standard alist layout (1-indexed, zero padding allowed)."""
    lines = [ln for ln in (raw.strip() for raw in text.splitlines()) if ln]
    if len(lines) < 4:
        raise AlistError("document too short for an alist header")

    def ints(line: str, what: str) -> list[int]:
        try:
            return [int(tok) for tok in line.split()]
        except ValueError as exc:
            raise AlistError(f"non-integer token in {what}: {line!r}") from exc

    header = ints(lines[0], "size header")
    if len(header) != 2:
        raise AlistError(f"size header must hold two integers, got {lines[0]!r}")
    n, m = header
    if n < 1 or m < 1:
        raise AlistError("matrix dimensions must be positive")
    maxdeg = ints(lines[1], "max-degree header")
    if len(maxdeg) != 2:
        raise AlistError("max-degree header must hold two integers")
    max_var_deg, max_check_deg = maxdeg

    var_degs = ints(lines[2], "variable degree list")
    check_degs = ints(lines[3], "check degree list")
    if len(var_degs) != n:
        raise AlistError(f"expected {n} variable degrees, got {len(var_degs)}")
    if len(check_degs) != m:
        raise AlistError(f"expected {m} check degrees, got {len(check_degs)}")
    if any(d < 1 for d in var_degs) or any(d < 1 for d in check_degs):
        raise AlistError("degrees must be >= 1 (no empty rows or columns)")
    if max(var_degs) > max_var_deg or max(check_degs) > max_check_deg:
        raise AlistError("degree list exceeds declared maximum")
    if sum(var_degs) != sum(check_degs):
        raise AlistError("variable and check degree sums disagree")

    body = lines[4:]
    if len(body) < n + m:
        raise AlistError(f"expected {n + m} adjacency lines, got {len(body)}")

    def adjacency(rows: list[str], degs: list[int], limit: int,
                  what: str) -> tuple:
        out = []
        for i, (line, deg) in enumerate(zip(rows, degs)):
            entries = [v for v in ints(line, f"{what} adjacency") if v != 0]
            if len(entries) != deg:
                raise AlistError(
                    f"{what} {i + 1} lists {len(entries)} neighbors, expected {deg}"
                )
            if any(not 1 <= v <= limit for v in entries):
                raise AlistError(f"{what} {i + 1} has an index out of range")
            zero_based = sorted(v - 1 for v in entries)
            if len(set(zero_based)) != deg:
                raise AlistError(f"{what} {i + 1} repeats a neighbor")
            out.append(tuple(zero_based))
        return tuple(out)

    var_nb = adjacency(body[:n], var_degs, m, "variable")
    check_nb = adjacency(body[n:n + m], check_degs, n, "check")

    # cross-check the two adjacency sections against each other
    from_vars = {(chk, v) for v, checks in enumerate(var_nb) for chk in checks}
    from_checks = {(chk, v) for chk, cols in enumerate(check_nb) for v in cols}
    if from_vars != from_checks:
        raise AlistError("variable and check adjacency sections disagree")

    return ParityCheckMatrix(n=n, m=m, var_neighbors=var_nb, check_neighbors=check_nb)


def serialize_alist(hm: ParityCheckMatrix) -> str:
    var_degs = [len(nb) for nb in hm.var_neighbors]
    check_degs = [len(nb) for nb in hm.check_neighbors]
    lines = [
        f"{hm.n} {hm.m}",
        f"{max(var_degs)} {max(check_degs)}",
        " ".join(map(str, var_degs)),
        " ".join(map(str, check_degs)),
    ]
    for nb in hm.var_neighbors:
        lines.append(" ".join(str(v + 1) for v in nb))
    for nb in hm.check_neighbors:
        lines.append(" ".join(str(v + 1) for v in nb))
    return "\n".join(lines) + "\n"


def load_alist(path: str) -> ParityCheckMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_alist(fh.read())


class Encoder:
    """Systematic encoder from GF(2) elimination of the parity-check matrix.

    Pivot columns become parity positions; the remaining columns carry the
    information bits unchanged.
    """

    def __init__(self, hm: ParityCheckMatrix) -> None:
        h = hm.dense().astype(np.uint8)
        m, n = h.shape
        pivot_cols: list[int] = []
        row = 0
        for col in range(n):
            if row == m:
                break
            hit = np.nonzero(h[row:, col])[0]
            if hit.size == 0:
                continue
            pivot = row + int(hit[0])
            if pivot != row:
                h[[row, pivot]] = h[[pivot, row]]
            others = np.nonzero(h[:, col])[0]
            for r in others:
                if r != row:
                    h[r] ^= h[row]
            pivot_cols.append(col)
            row += 1
        if row < m:
            raise EncodingError(
                f"parity-check matrix is rank deficient (rank {row} < {m})"
            )
        self.hm = hm
        self.n = n
        self.k = n - m
        self.parity_positions = np.array(pivot_cols, dtype=np.int64)
        self.info_positions = np.array(
            sorted(set(range(n)) - set(pivot_cols)), dtype=np.int64
        )
        # reduced system: parity = P @ info (mod 2)
        self._p = h[:, self.info_positions].copy()

    def encode(self, info_bits) -> np.ndarray:
        info = np.asarray(info_bits, dtype=np.uint8).reshape(-1)
        if info.shape[0] != self.k:
            raise ValueError(f"expected {self.k} info bits, got {info.shape[0]}")
        codeword = np.zeros(self.n, dtype=np.uint8)
        codeword[self.info_positions] = info
        codeword[self.parity_positions] = (self._p @ info) % 2
        return codeword


def encode(hm: ParityCheckMatrix, info_bits) -> np.ndarray:
    """One-shot systematic encoding (builds the elimination each call)."""
    return Encoder(hm).encode(info_bits)


def syndrome(hm: ParityCheckMatrix, bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    return np.array(
        [np.bitwise_xor.reduce(bits[list(nb)]) for nb in hm.check_neighbors],
        dtype=np.uint8,
    )


class MinSumDecoder:
    """Flooding-schedule normalized min-sum with per-instance message buffers."""

    def __init__(self, hm: ParityCheckMatrix) -> None:
        self.hm = hm
        edges_check = []
        edges_var = []
        starts = []
        pos = 0
        for check, cols in enumerate(hm.check_neighbors):
            starts.append(pos)
            for v in cols:
                edges_check.append(check)
                edges_var.append(v)
                pos += 1
        self.e_check = np.array(edges_check, dtype=np.int64)
        self.e_var = np.array(edges_var, dtype=np.int64)
        self.check_starts = np.array(starts, dtype=np.int64)
        self.n_edges = pos

    def decode(self, llrs, max_iters: int = 25, norm_factor: float = 0.75
               ) -> tuple[np.ndarray, bool, int]:
        lam = np.asarray(llrs, dtype=np.float64).reshape(-1)
        if lam.shape[0] != self.hm.n:
            raise ValueError(f"expected {self.hm.n} LLRs, got {lam.shape[0]}")
        if not np.all(np.isfinite(lam)):
            raise ValueError("LLRs must be finite")
        if not 0 < norm_factor <= 1:
            raise ValueError("norm_factor must lie in (0, 1]")

        bits = (lam < 0).astype(np.uint8)
        if not np.any(self._syndrome(bits)):
            return bits, True, 0

        v2c = lam[self.e_var].copy()
        for iteration in range(1, max_iters + 1):
            sgn = np.where(v2c < 0, -1.0, 1.0)
            sign_tot = np.multiply.reduceat(sgn, self.check_starts)
            other_sign = sign_tot[self.e_check] * sgn

            mag = np.abs(v2c)
            min1 = np.minimum.reduceat(mag, self.check_starts)
            is_min = mag == min1[self.e_check]
            # knock out one minimal edge per check to expose the runner-up
            first_min = np.zeros(self.n_edges, dtype=bool)
            _, first_pos = np.unique(self.e_check[is_min], return_index=True)
            first_min[np.nonzero(is_min)[0][first_pos]] = True
            mag_wo = np.where(first_min, np.inf, mag)
            min2 = np.minimum.reduceat(mag_wo, self.check_starts)
            other_min = np.where(first_min, min2[self.e_check], min1[self.e_check])

            c2v = norm_factor * other_sign * other_min
            total = lam.copy()
            np.add.at(total, self.e_var, c2v)
            bits = (total < 0).astype(np.uint8)
            if not np.any(self._syndrome(bits)):
                return bits, True, iteration
            v2c = total[self.e_var] - c2v
        return bits, False, max_iters

    def _syndrome(self, bits: np.ndarray) -> np.ndarray:
        return np.add.reduceat(bits[self.e_var].astype(np.int64),
                               self.check_starts) % 2


def decode_min_sum(hm: ParityCheckMatrix, llrs, max_iters: int = 25,
                   norm_factor: float = 0.75) -> tuple[np.ndarray, bool, int]:
    """Convenience wrapper building a fresh decoder per call."""
    return MinSumDecoder(hm).decode(llrs, max_iters=max_iters,
                                    norm_factor=norm_factor)


def make_regular_ldpc(n: int, dv: int, dc: int, seed: int) -> ParityCheckMatrix:
    """Pseudo-random (dv, dc)-regular code via socket matching.

    Duplicate edges left by the random matching are repaired by seeded edge
    swaps, keeping the degree profile exact. Deterministic for a fixed seed.
    """
    if (n * dv) % dc != 0:
        raise ValueError("n*dv must be divisible by dc")
    m = n * dv // dc
    rng = np.random.default_rng(seed)
    var_sockets = np.repeat(np.arange(n), dv)
    check_sockets = np.repeat(np.arange(m), dc)
    order = rng.permutation(var_sockets.shape[0])
    edges = list(zip(check_sockets.tolist(), var_sockets[order].tolist()))

    def duplicates(es):
        seen = set()
        dup = []
        for i, e in enumerate(es):
            if e in seen:
                dup.append(i)
            seen.add(e)
        return dup

    for _ in range(10_000):
        dup = duplicates(edges)
        if not dup:
            break
        i = dup[0]
        j = int(rng.integers(0, len(edges)))
        ci, vi = edges[i]
        cj, vj = edges[j]
        edges[i] = (ci, vj)
        edges[j] = (cj, vi)
    else:
        raise RuntimeError("could not repair duplicate edges")

    h = np.zeros((m, n), dtype=np.uint8)
    for check, var in edges:
        h[check, var] = 1
    return from_dense(h)
