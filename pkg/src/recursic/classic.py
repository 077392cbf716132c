"""Classical baseline detectors and exact oracles.

Exhaustive ML search and exhaustive max-log LLRs act as ground truth for the
tree detector. The linear MMSE equalizer and ZF/MMSE ordered successive
cancellation are the conventional baselines; their soft output comes from a
per-layer scalar Gaussian model using the post-equalization SNR, which
deliberately ignores error propagation.
"""

from __future__ import annotations

import numpy as np

from .modem import Constellation, nearest_point
from .numerics import batch_residual_metrics
from .results import DetectionResult, Diagnostics

SEARCH_BITS_LIMIT = 24


class SearchSpaceError(ValueError):
    """Raised when an exhaustive search would exceed the tractability guard."""


def enumerate_candidates(c: Constellation, l: int) -> np.ndarray:
    """Symbol-index matrix of all M^l candidate vectors, shape (M^l, l).

    Candidate kappa holds index (kappa // M^j) % M at layer j, i.e. layer 0
    runs fastest, so ties in any argmin resolve to the lowest mixed-radix
    candidate index.
    """
    m = c.order
    total = m ** l
    kappa = np.arange(total)
    cols = [(kappa // (m ** j)) % m for j in range(l)]
    return np.stack(cols, axis=1)


def _check_guard(c: Constellation, l: int) -> None:
    if l * c.bits_per_symbol > SEARCH_BITS_LIMIT:
        raise SearchSpaceError(
            f"search space of {l} layers x {c.bits_per_symbol} bits exceeds "
            f"{SEARCH_BITS_LIMIT} bits"
        )


def exhaustive_metrics(y_tilde: np.ndarray, r: np.ndarray,
                       c: Constellation) -> tuple[np.ndarray, np.ndarray]:
    """(candidate index matrix, residual metric per candidate)."""
    l = r.shape[1]
    _check_guard(c, l)
    cand_idx = enumerate_candidates(c, l)
    metrics = batch_residual_metrics(
        np.asarray(y_tilde, dtype=np.complex128).reshape(-1),
        np.asarray(r, dtype=np.complex128),
        c.points[cand_idx],
    )
    return cand_idx, metrics


def detect_ml_exhaustive(y_tilde, r, c: Constellation) -> DetectionResult:
    """Brute-force minimum-residual detection over all M^L candidates."""
    cand_idx, metrics = exhaustive_metrics(y_tilde, r, c)
    best = int(np.argmin(metrics))
    indices = cand_idx[best]
    llrs = np.zeros((r.shape[1], c.bits_per_symbol))
    return DetectionResult(
        hard_symbols=c.points[indices],
        hard_bits=c.labels[indices].copy(),
        llrs=llrs,
        hard_indices=indices.copy(),
        diagnostics=Diagnostics(),
    )


def llr_maxlog_exhaustive(y_tilde, r, c: Constellation) -> np.ndarray:
    """Max-log LLRs over the full lattice, unclipped.

    Entry (l, b) is min-metric over candidates whose bit is 1 minus
    min-metric over candidates whose bit is 0, so positive values favor
    bit 0, consistent with the package-wide sign convention.
    """
    cand_idx, metrics = exhaustive_metrics(y_tilde, r, c)
    l = r.shape[1]
    nb = c.bits_per_symbol
    llrs = np.empty((l, nb))
    bits = c.labels[cand_idx]  # (n_cand, l, nb)
    for layer in range(l):
        for b in range(nb):
            mask1 = bits[:, layer, b] == 1
            m1 = metrics[mask1].min()
            m0 = metrics[~mask1].min()
            llrs[layer, b] = m1 - m0
    return llrs


def mmse_filter_stats(h: np.ndarray, sigma2: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """MMSE filter plus per-layer bias and post-equalization SNR.

    Returns (W, mu, gamma): W = (H^H H + sigma2 I)^-1 H^H, mu the per-layer
    bias of W H, and gamma the unbiased post-equalization SNR
    1 / [(I + H^H H / sigma2)^-1]_ll - 1.
    """
    h = np.asarray(h, dtype=np.complex128)
    l = h.shape[1]
    gram = h.conj().T @ h
    inv = np.linalg.inv(gram + sigma2 * np.eye(l))
    w = inv @ h.conj().T
    if sigma2 == 0.0:
        mu = np.ones(l)
        gamma = np.full(l, np.inf)
    else:
        b = sigma2 * np.real(np.diag(inv))
        mu = 1.0 - b
        gamma = 1.0 / b - 1.0
    return w, mu, gamma


def scalar_maxlog_llrs(z: complex, gamma: float, c: Constellation) -> np.ndarray:
    """Per-bit max-log LLRs for one equalized symbol with error variance 1/gamma."""
    d = np.abs(z - c.points) ** 2
    llrs = np.empty(c.bits_per_symbol)
    for b in range(c.bits_per_symbol):
        mask1 = c.labels[:, b] == 1
        diff = d[mask1].min() - d[~mask1].min()
        if np.isinf(gamma):
            llrs[b] = np.inf * diff if diff != 0 else 0.0
        else:
            llrs[b] = gamma * diff
    return llrs


def detect_mmse(y, h, sigma2: float, c: Constellation) -> DetectionResult:
    """Linear MMSE equalization with post-SNR-scaled soft output."""
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    h = np.asarray(h, dtype=np.complex128)
    l = h.shape[1]
    w, mu, gamma = mmse_filter_stats(h, sigma2)
    x = w @ y
    z = x / mu
    indices = np.empty(l, dtype=np.int64)
    llrs = np.empty((l, c.bits_per_symbol))
    for layer in range(l):
        indices[layer], _ = nearest_point(c, complex(z[layer]))
        llrs[layer] = scalar_maxlog_llrs(complex(z[layer]), float(gamma[layer]), c)
    return DetectionResult(
        hard_symbols=c.points[indices],
        hard_bits=c.labels[indices].copy(),
        llrs=llrs,
        hard_indices=indices,
        diagnostics=Diagnostics(),
    )


def _zf_stats(h: np.ndarray, sigma2: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ZF pseudo-inverse filter with unit bias and gamma = 1/(sigma2 [(H^H H)^-1]_ll)."""
    l = h.shape[1]
    gram_inv = np.linalg.inv(h.conj().T @ h)
    w = gram_inv @ h.conj().T
    diag = np.real(np.diag(gram_inv))
    gamma = np.full(l, np.inf) if sigma2 == 0.0 else 1.0 / (sigma2 * diag)
    return w, np.ones(l), gamma


def detect_sic(y, h, sigma2: float, c: Constellation, mode: str = "mmse") -> DetectionResult:
    """Ordered successive interference cancellation (V-BLAST style).

    At each stage the linear filter is recomputed on the remaining layers,
    the layer with the highest post-equalization SNR is sliced and its
    contribution removed. Soft output per layer uses the scalar Gaussian
    model at the stage where that layer was detected.
    """
    mode = mode.lower()
    if mode not in ("zf", "mmse"):
        raise ValueError(f"mode must be 'zf' or 'mmse', got {mode!r}")
    y = np.asarray(y, dtype=np.complex128).reshape(-1).copy()
    h = np.asarray(h, dtype=np.complex128)
    n, l = h.shape
    if mode == "zf" and n < l:
        raise ValueError("ZF ordering needs at least as many receive antennas as layers")

    remaining = list(range(l))
    indices = np.empty(l, dtype=np.int64)
    llrs = np.empty((l, c.bits_per_symbol))
    while remaining:
        h_sub = h[:, remaining]
        if mode == "mmse":
            w, mu, gamma = mmse_filter_stats(h_sub, sigma2)
        else:
            w, mu, gamma = _zf_stats(h_sub, sigma2)
        stage = int(np.argmax(gamma))
        layer = remaining[stage]
        z = complex((w[stage] @ y) / mu[stage])
        idx, point = nearest_point(c, z)
        indices[layer] = idx
        llrs[layer] = scalar_maxlog_llrs(z, float(gamma[stage]), c)
        y -= h[:, layer] * point
        remaining.pop(stage)

    return DetectionResult(
        hard_symbols=c.points[indices],
        hard_bits=c.labels[indices].copy(),
        llrs=llrs,
        hard_indices=indices,
        diagnostics=Diagnostics(),
    )
