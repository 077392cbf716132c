"""Square M-QAM constellations with per-axis Gray labeling.

Points carry unit average energy. Labels interleave the in-phase and
quadrature Gray bits I-first (b0 = first I bit, b1 = first Q bit, ...), and
points are ordered by their label value so the point index equals the label
read as a binary number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUPPORTED_ORDERS = (4, 16, 64)

# Average energy of the unnormalized +/-1, +/-3, ... grid: 2(M-1)/3.
_ENERGY_NORM = {4: 2.0, 16: 10.0, 64: 42.0}


@dataclass(frozen=True)
class Constellation:
    """An M-ary QAM point set with Gray bit labels.

    points[i] is the complex point whose label is the bit pattern of i
    (most significant bit first); labels[i] holds those bits explicitly.
    """

    order: int
    points: np.ndarray
    bits_per_symbol: int
    labels: np.ndarray

    @property
    def axis_levels(self) -> np.ndarray:
        """Normalized per-axis amplitude levels in ascending order."""
        side = int(round(np.sqrt(self.order)))
        return (2 * np.arange(side) - (side - 1)) / np.sqrt(_ENERGY_NORM[self.order])


def _gray(k: int) -> int:
    return k ^ (k >> 1)


def make_qam(m: int) -> Constellation:
    """Build a unit-energy square QAM constellation of order m."""
    if m not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported QAM order {m}; expected one of {SUPPORTED_ORDERS}")
    bits = int(np.log2(m))
    axis_bits = bits // 2
    side = 1 << axis_bits
    scale = 1.0 / np.sqrt(_ENERGY_NORM[m])

    # gray(level) gives the axis label; invert so label -> level.
    level_of_label = np.empty(side, dtype=np.int64)
    for level in range(side):
        level_of_label[_gray(level)] = level

    points = np.empty(m, dtype=np.complex128)
    labels = np.empty((m, bits), dtype=np.uint8)
    for idx in range(m):
        bit_vec = [(idx >> (bits - 1 - k)) & 1 for k in range(bits)]
        i_label = 0
        q_label = 0
        for k in range(axis_bits):
            i_label = (i_label << 1) | bit_vec[2 * k]
            q_label = (q_label << 1) | bit_vec[2 * k + 1]
        i_level = level_of_label[i_label]
        q_level = level_of_label[q_label]
        re = (2 * i_level - (side - 1)) * scale
        im = (2 * q_level - (side - 1)) * scale
        points[idx] = re + 1j * im
        labels[idx] = bit_vec

    return Constellation(order=m, points=points, bits_per_symbol=bits, labels=labels)


def bits_to_index(c: Constellation, bits) -> int:
    """Pack a bit vector into the point index it labels."""
    bits = np.asarray(bits).ravel()
    if bits.shape[0] != c.bits_per_symbol:
        raise ValueError(
            f"expected {c.bits_per_symbol} bits, got {bits.shape[0]}"
        )
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    return idx


def bits_to_symbol(c: Constellation, bits) -> complex:
    """Map a bit vector to its constellation point."""
    return complex(c.points[bits_to_index(c, bits)])


def symbol_to_bits(c: Constellation, z: complex) -> np.ndarray:
    """Bit label of the constellation point nearest to z."""
    idx, _ = nearest_point(c, z)
    return c.labels[idx].copy()


def nearest_point(c: Constellation, z: complex) -> tuple[int, complex]:
    """Nearest constellation point to z; ties break to the lowest index.

    Square QAM decouples per axis, so only the two bracketing levels per
    axis (at most four points) need to be compared.
    """
    if not np.isfinite(z.real) or not np.isfinite(z.imag):
        raise ValueError("input must be finite")
    levels = c.axis_levels
    side = levels.shape[0]
    step = levels[1] - levels[0] if side > 1 else 1.0

    def bracket(u: float) -> list[int]:
        lo = int(np.floor((u - levels[0]) / step))
        cands = {min(max(lo, 0), side - 1), min(max(lo + 1, 0), side - 1)}
        return sorted(cands)

    best_idx = -1
    best_d = np.inf
    for i_level in bracket(z.real):
        for q_level in bracket(z.imag):
            d = (z.real - levels[i_level]) ** 2 + (z.imag - levels[q_level]) ** 2
            idx = _index_of_levels(c, i_level, q_level)
            if d < best_d or (d == best_d and idx < best_idx):
                best_d = d
                best_idx = idx
    return best_idx, complex(c.points[best_idx])


def _index_of_levels(c: Constellation, i_level: int, q_level: int) -> int:
    axis_bits = c.bits_per_symbol // 2
    i_label = _gray(i_level)
    q_label = _gray(q_level)
    idx = 0
    for k in range(axis_bits - 1, -1, -1):
        idx = (idx << 2) | (((i_label >> k) & 1) << 1) | ((q_label >> k) & 1)
    return idx


def hard_indices_to_bits(c: Constellation, indices: np.ndarray) -> np.ndarray:
    """Label rows for a vector of point indices, shape (len, bits_per_symbol)."""
    return c.labels[np.asarray(indices, dtype=np.int64)].copy()
