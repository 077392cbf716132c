"""Shared detector output types.

LLR sign convention used throughout the package: positive means bit 0 is the
more likely value. Every detector and the LDPC decoder boundary follow it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Diagnostics:
    """Bookkeeping emitted alongside a detection result.

    fallback_mask, when present, flags the (layer, bit) positions whose LLR
    came from the bit-flip surrogate, in the same order as the LLR matrix.
    """

    block_evals: int = 0
    fallback_count: int = 0
    fallback_mask: np.ndarray | None = None


@dataclass
class DetectionResult:
    """Hard and soft output of one detection, in original layer order."""

    hard_symbols: np.ndarray
    hard_bits: np.ndarray
    llrs: np.ndarray
    hard_indices: np.ndarray
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
