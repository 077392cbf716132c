"""Flat-fading channel and noise generation.

One ChannelUse is an independent narrowband MIMO transmission y = H s + n
with circularly symmetric complex Gaussian noise. The operating SNR is
defined per receive antenna over the total transmit power, which for
unit-energy symbols gives sigma2 = 1 / (SNR_linear * L).

All randomness flows through numpy Generator objects (PCG64). Monte Carlo
workers derive independent generators from (seed, stream indices) via
``rng_for``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .modem import Constellation


@dataclass(frozen=True)
class ChannelUse:
    """One simulated transmission: channel, sent symbols/bits, observation."""

    h: np.ndarray
    s: np.ndarray
    bits: np.ndarray
    symbol_indices: np.ndarray
    y: np.ndarray
    sigma2: float
    snr_db: float


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Independent PCG64 generator for (seed, stream indices)."""
    return np.random.default_rng([int(seed), *map(int, stream)])


def noise_variance(snr_db: float, l: int) -> float:
    """Per-entry complex noise variance for an SNR in dB and l layers."""
    if l < 1:
        raise ValueError("layer count must be >= 1")
    return 1.0 / (10.0 ** (snr_db / 10.0) * l)


def sample_rayleigh(n: int, l: int, rng: np.random.Generator) -> np.ndarray:
    """n x l matrix with i.i.d. circularly symmetric unit-variance entries."""
    return (rng.standard_normal((n, l)) + 1j * rng.standard_normal((n, l))) / np.sqrt(2.0)


def _exp_correlation_sqrt(dim: int, rho: float) -> np.ndarray:
    corr = rho ** np.abs(np.subtract.outer(np.arange(dim), np.arange(dim)))
    vals, vecs = np.linalg.eigh(corr)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def sample_kronecker(n: int, l: int, rho_rx: float, rho_tx: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Kronecker-correlated Rayleigh channel with exponential correlation.

    H = R_rx^(1/2) W R_tx^(1/2) with (R)_ij = rho^|i-j| on each side and W
    i.i.d. unit-variance complex Gaussian.
    """
    if not (0 <= rho_rx < 1 and 0 <= rho_tx < 1):
        raise ValueError("correlation magnitudes must lie in [0, 1)")
    w = sample_rayleigh(n, l, rng)
    if rho_rx == 0 and rho_tx == 0:
        return w
    return _exp_correlation_sqrt(n, rho_rx) @ w @ _exp_correlation_sqrt(l, rho_tx)


def transmit(h: np.ndarray, s: np.ndarray, sigma2: float,
             rng: np.random.Generator) -> np.ndarray:
    """y = H s + n with per-entry complex noise variance sigma2."""
    h = np.asarray(h)
    s = np.asarray(s).reshape(-1)
    if h.shape[1] != s.shape[0]:
        raise ValueError(f"h has {h.shape[1]} columns but s has length {s.shape[0]}")
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    n_rx = h.shape[0]
    noise = np.sqrt(sigma2 / 2.0) * (
        rng.standard_normal(n_rx) + 1j * rng.standard_normal(n_rx)
    )
    return h @ s + noise


@dataclass(frozen=True)
class ChannelSpec:
    """Which fading model to draw H from."""

    kind: str = "iid"  # "iid" | "kronecker"
    rho_rx: float = 0.0
    rho_tx: float = 0.0

    def sample(self, n: int, l: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "iid":
            return sample_rayleigh(n, l, rng)
        if self.kind == "kronecker":
            return sample_kronecker(n, l, self.rho_rx, self.rho_tx, rng)
        raise ValueError(f"unknown channel kind {self.kind!r}")


def draw_channel_use(spec: ChannelSpec, c: Constellation, n: int, l: int,
                     snr_db: float, rng: np.random.Generator) -> ChannelUse:
    """Draw one full transmission at the given SNR."""
    h = spec.sample(n, l, rng)
    indices = rng.integers(0, c.order, size=l)
    s = c.points[indices]
    bits = c.labels[indices].copy()
    sigma2 = noise_variance(snr_db, l)
    y = transmit(h, s, sigma2, rng)
    return ChannelUse(h=h, s=s, bits=bits, symbol_indices=indices, y=y,
                      sigma2=sigma2, snr_db=snr_db)
