"""Learned multi-path successive interference cancellation.

Detection runs over the triangularized system (y_tilde, R) from the sorted
extended QR preprocessing, layer by layer from the strongest (last diagonal
position) to the weakest. At each stage the shared network block scores the
constellation; each surviving path spawns its K most probable symbol
hypotheses, forming K^L leaf candidates after the final layer. The hard
decision is the leaf with minimum residual, and per-bit LLRs come from
max-log differences over the tracked leaves, with a bit-flip surrogate when
one bit value is missing from the tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .modem import Constellation
from .network import NetworkParams, block_forward, block_forward_batch
from .numerics import batch_residual_metrics, project_receive, sorted_qr_extended
from .results import DetectionResult, Diagnostics


class DegenerateLayerError(ValueError):
    """Raised when a diagonal entry of R vanishes."""


@dataclass(frozen=True)
class SoftConfig:
    """Soft-output settings: tree width, clip levels, fallback handling.

    eps_max defaults to 0.1 * llr_max. snr_input selects what the network
    block is conditioned on: the global operating SNR (default) or a
    per-layer effective SNR derived from the diagonal of R.
    """

    k: int = 1
    llr_max: float = np.inf
    alpha: float = 0.2
    eps_max: float | None = None
    snr_input: str = "global"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not (0 < self.alpha <= 1):
            raise ValueError("alpha must lie in (0, 1]")
        if self.llr_max <= 0:
            raise ValueError("llr_max must be positive")
        if self.eps_max is not None and self.eps_max > self.llr_max:
            raise ValueError("eps_max must not exceed llr_max")
        if self.snr_input not in ("global", "per_layer"):
            raise ValueError("snr_input must be 'global' or 'per_layer'")

    @property
    def fallback_clip(self) -> float:
        return 0.1 * self.llr_max if self.eps_max is None else self.eps_max


@dataclass
class PathHypothesis:
    """One tracked detection path.

    symbols[j] is the constellation index assigned at triangular position j
    (-1 while unassigned); probs[j] the probability vector produced when
    that position was processed. metric accumulates the squared residual
    contribution of the assigned layers.
    """

    symbols: np.ndarray
    metric: float = 0.0
    probs: list = field(default_factory=list)


def sic_step(y_tilde_l: complex, r: np.ndarray, layer: int, detected) -> complex:
    """Interference-cancelled, scaled observation for one layer.

    detected holds symbol values for positions layer+1 .. L-1 in that order.
    """
    r = np.asarray(r)
    diag = r[layer, layer]
    if diag == 0:
        raise DegenerateLayerError(f"R[{layer},{layer}] is zero")
    detected = np.asarray(detected, dtype=np.complex128).reshape(-1)
    interference = r[layer, layer + 1:] @ detected if detected.size else 0.0
    return complex((y_tilde_l - interference) / diag)


def layer_snr_db(snr_db: float, r: np.ndarray, layer: int, n_layers: int) -> float:
    """Per-layer effective SNR in dB implied by the diagonal of R."""
    return float(snr_db + 10.0 * np.log10(n_layers * np.abs(r[layer, layer]) ** 2))


def expected_block_evals(k: int, l: int) -> int:
    """Block evaluations of one detection: (K^L - 1)/(K - 1), or L at K=1."""
    if k == 1:
        return l
    return (k ** l - 1) // (k - 1)


def _top_k(probs: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest probabilities, ties to the lower index."""
    return np.argsort(-probs, kind="stable")[:k]


def detect_multipath(
    p: NetworkParams,
    y_tilde: np.ndarray,
    r: np.ndarray,
    c: Constellation,
    cfg: SoftConfig,
    snr_db: float,
    perm: np.ndarray | None = None,
) -> tuple[list[PathHypothesis], DetectionResult]:
    """Run the multi-path recursion and return all leaves plus the result.

    The DetectionResult is mapped back through perm (the QR column
    permutation) into original layer order; perm=None means identity.
    """
    y_tilde = np.asarray(y_tilde, dtype=np.complex128).reshape(-1)
    r = np.asarray(r, dtype=np.complex128)
    l = r.shape[1]
    if not 1 <= cfg.k <= c.order:
        raise ValueError(f"k={cfg.k} outside 1..{c.order}")

    paths = [PathHypothesis(symbols=np.full(l, -1, dtype=np.int64))]
    block_evals = 0
    for layer in range(l - 1, -1, -1):
        snr_in = (snr_db if cfg.snr_input == "global"
                  else layer_snr_db(snr_db, r, layer, l))
        children: list[PathHypothesis] = []
        for path in paths:
            detected = c.points[path.symbols[layer + 1:]]
            s_tilde = sic_step(complex(y_tilde[layer]), r, layer, detected)
            probs = block_forward(p, s_tilde, snr_in)
            block_evals += 1
            for sym in _top_k(probs, cfg.k):
                child_syms = path.symbols.copy()
                child_syms[layer] = sym
                step = (np.abs(r[layer, layer]) ** 2
                        * abs(s_tilde - c.points[sym]) ** 2)
                children.append(PathHypothesis(
                    symbols=child_syms,
                    metric=path.metric + float(step),
                    probs=[probs] + path.probs,
                ))
        paths = children

    leaf_syms = np.stack([path.symbols for path in paths])
    metrics = batch_residual_metrics(y_tilde, r, c.points[leaf_syms])
    for path, metric in zip(paths, metrics):
        path.metric = float(metric)

    best = _argmin_by_candidate_index(metrics, leaf_syms, c.order)
    llrs, fallback_mask = compute_llrs(y_tilde, r, paths, best, c, cfg)

    if perm is None:
        perm = np.arange(l)
    perm = np.asarray(perm, dtype=np.int64)
    out_idx = np.empty(l, dtype=np.int64)
    out_llrs = np.empty_like(llrs)
    out_mask = np.empty_like(fallback_mask)
    out_idx[perm] = leaf_syms[best]
    out_llrs[perm] = llrs
    out_mask[perm] = fallback_mask
    result = DetectionResult(
        hard_symbols=c.points[out_idx],
        hard_bits=c.labels[out_idx].copy(),
        llrs=out_llrs,
        hard_indices=out_idx,
        diagnostics=Diagnostics(block_evals=block_evals,
                                fallback_count=int(fallback_mask.sum()),
                                fallback_mask=out_mask),
    )
    return paths, result


def _argmin_by_candidate_index(metrics: np.ndarray, syms: np.ndarray,
                               order: int) -> int:
    """Index of the minimum metric; ties go to the lowest mixed-radix
    candidate index (position 0 fastest), matching the exhaustive search."""
    weights = order ** np.arange(syms.shape[1], dtype=np.int64)
    kappa = syms @ weights
    by_kappa = np.argsort(kappa)
    return int(by_kappa[np.argmin(metrics[by_kappa])])


def compute_llrs(
    y_tilde: np.ndarray,
    r: np.ndarray,
    paths: list[PathHypothesis],
    best: int,
    c: Constellation,
    cfg: SoftConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Max-log LLRs over the tracked leaves, in triangular position order.

    Positive favors bit 0. Where a bit value is missing among the leaves, a
    surrogate counterhypothesis is built from the best path by flipping that
    bit; of the constellation points carrying the flipped value, the one the
    best path's probability vector rates highest is used. Surrogate LLRs are
    scaled by alpha and clipped to the tighter fallback bound.

    Returns (llrs, fallback_mask), each of shape (L, bits_per_symbol).
    """
    if not paths:
        raise ValueError("paths must be non-empty")
    l = r.shape[1]
    nb = c.bits_per_symbol
    leaf_syms = np.stack([path.symbols for path in paths])
    metrics = np.array([path.metric for path in paths])
    best_path = paths[best]
    best_metric = metrics[best]

    llrs = np.empty((l, nb))
    fallback = np.zeros((l, nb), dtype=bool)
    for layer in range(l):
        bits_here = c.labels[leaf_syms[:, layer]]  # (n_leaf, nb)
        for b in range(nb):
            is_one = bits_here[:, b] == 1
            have1 = bool(is_one.any())
            have0 = bool((~is_one).any())
            if have0 and have1:
                raw = metrics[is_one].min() - metrics[~is_one].min()
                llrs[layer, b] = float(np.clip(raw, -cfg.llr_max, cfg.llr_max))
                continue
            fallback[layer, b] = True
            best_sym = int(best_path.symbols[layer])
            v = int(c.labels[best_sym, b])
            flip_candidates = np.nonzero(c.labels[:, b] == 1 - v)[0]
            probs_layer = best_path.probs[layer]
            surrogate_sym = int(flip_candidates[np.argmax(probs_layer[flip_candidates])])
            surrogate = best_path.symbols.copy()
            surrogate[layer] = surrogate_sym
            flip_metric = float(
                batch_residual_metrics(y_tilde, r, c.points[surrogate[np.newaxis]])[0]
            )
            m0, m1 = (best_metric, flip_metric) if v == 0 else (flip_metric, best_metric)
            raw = (m1 - m0) * cfg.alpha
            bound = cfg.fallback_clip
            llrs[layer, b] = float(np.clip(raw, -bound, bound))
    return llrs, fallback


def detect(p: NetworkParams, h: np.ndarray, y: np.ndarray, sigma2: float,
           c: Constellation, cfg: SoftConfig, snr_db: float) -> DetectionResult:
    """End-to-end detection of one channel use: preprocessing plus tree."""
    fact = sorted_qr_extended(h, float(np.sqrt(sigma2)))
    y_tilde = project_receive(fact.q, y)
    _, result = detect_multipath(p, y_tilde, fact.r, c, cfg, snr_db, fact.perm)
    return result


@dataclass
class BatchDetection:
    """Vectorized detection output, original layer order."""

    hard_indices: np.ndarray  # (B, L)
    hard_bits: np.ndarray     # (B, L, bits)
    llrs: np.ndarray          # (B, L, bits)
    fallback_mask: np.ndarray  # (B, L, bits)
    block_evals: int


def detect_multipath_batch(
    p: NetworkParams,
    y_tilde: np.ndarray,
    r: np.ndarray,
    c: Constellation,
    cfg: SoftConfig,
    snr_db,
    perms: np.ndarray | None = None,
) -> BatchDetection:
    """Vectorized equivalent of detect_multipath over a batch of instances.

    y_tilde is (B, L), r is (B, L, L), snr_db a scalar or (B,) array and
    perms an optional (B, L) permutation block. Semantics match the
    per-instance path (same tie-breaking, fallback, and clipping rules).
    """
    y_tilde = np.asarray(y_tilde, dtype=np.complex128)
    r = np.asarray(r, dtype=np.complex128)
    b, l = y_tilde.shape
    m = c.order
    k = cfg.k
    if not 1 <= k <= m:
        raise ValueError(f"k={k} outside 1..{m}")
    snr_arr = np.broadcast_to(np.asarray(snr_db, dtype=np.float64).reshape(-1),
                              (b,)).copy()

    syms = np.zeros((b, 1, l), dtype=np.int64)
    probs_store = []
    for layer in range(l - 1, -1, -1):
        n_paths = syms.shape[1]
        if layer == l - 1:
            interference = np.zeros((b, n_paths), dtype=np.complex128)
        else:
            pts = c.points[syms[:, :, layer + 1:]]
            interference = np.einsum("bj,bpj->bp", r[:, layer, layer + 1:], pts)
        diag = r[:, layer, layer][:, None]
        s_tilde = (y_tilde[:, layer][:, None] - interference) / diag
        if cfg.snr_input == "global":
            snr_in = np.repeat(snr_arr, n_paths)
        else:
            per = snr_arr + 10.0 * np.log10(l * np.abs(r[:, layer, layer]) ** 2)
            snr_in = np.repeat(per, n_paths)
        probs = block_forward_batch(p, s_tilde.reshape(-1), snr_in)
        probs = probs.reshape(b, n_paths, m)
        probs_store.append(probs)
        top = np.argsort(-probs, axis=2, kind="stable")[:, :, :k]
        syms = np.repeat(syms, k, axis=1)
        syms[:, :, layer] = top.reshape(b, n_paths * k)

    n_leaves = syms.shape[1]
    cands = c.points[syms]  # (B, P, L)
    diff = y_tilde[:, None, :] - np.matmul(cands, np.transpose(r, (0, 2, 1)))
    metrics = np.einsum("bpi,bpi->bp", diff.real, diff.real) + np.einsum(
        "bpi,bpi->bp", diff.imag, diff.imag
    )

    weights = m ** np.arange(l, dtype=np.int64)
    kappa = syms @ weights
    by_kappa = np.argsort(kappa, axis=1)
    ordered = np.take_along_axis(metrics, by_kappa, axis=1)
    best = np.take_along_axis(
        by_kappa, np.argmin(ordered, axis=1)[:, None], axis=1
    )[:, 0]

    rows = np.arange(b)
    best_syms = syms[rows, best]          # (B, L)
    best_metric = metrics[rows, best]

    nb = c.bits_per_symbol
    llrs = np.empty((b, l, nb))
    fallback = np.zeros((b, l, nb), dtype=bool)
    for layer in range(l):
        stage = l - 1 - layer  # store index that produced this layer
        # the path evaluated at a stage is the leaf prefix before the
        # remaining l - stage expansions
        ancestors = best // (k ** (l - stage))
        probs_best = probs_store[stage][rows, ancestors]  # (B, M)
        layer_bits = c.labels[syms[:, :, layer]]  # (B, P, nb)
        for bit in range(nb):
            is_one = layer_bits[:, :, bit] == 1
            m1 = np.where(is_one, metrics, np.inf).min(axis=1)
            m0 = np.where(~is_one, metrics, np.inf).min(axis=1)
            covered = np.isfinite(m1) & np.isfinite(m0)
            vals = np.clip(m1 - m0, -cfg.llr_max, cfg.llr_max)

            miss = ~covered
            if np.any(miss):
                fallback[miss, layer, bit] = True
                v = c.labels[best_syms[miss, layer], bit].astype(np.int64)
                flip_rows = np.nonzero(miss)[0]
                flip_metric = np.empty(flip_rows.shape[0])
                for out_pos, row in enumerate(flip_rows):
                    want = 1 - v[out_pos]
                    cand_idx = np.nonzero(c.labels[:, bit] == want)[0]
                    pick = cand_idx[np.argmax(probs_best[row, cand_idx])]
                    surrogate = best_syms[row].copy()
                    surrogate[layer] = pick
                    flip_metric[out_pos] = batch_residual_metrics(
                        y_tilde[row], r[row], c.points[surrogate[np.newaxis]]
                    )[0]
                m0f = np.where(v == 0, best_metric[flip_rows], flip_metric)
                m1f = np.where(v == 0, flip_metric, best_metric[flip_rows])
                bound = cfg.fallback_clip
                vals[miss] = np.clip((m1f - m0f) * cfg.alpha, -bound, bound)
            llrs[:, layer, bit] = vals

    if perms is None:
        out_idx = best_syms
        out_llrs = llrs
        out_mask = fallback
    else:
        perms = np.asarray(perms, dtype=np.int64)
        out_idx = np.empty_like(best_syms)
        out_llrs = np.empty_like(llrs)
        out_mask = np.empty_like(fallback)
        np.put_along_axis(out_idx, perms, best_syms, axis=1)
        np.put_along_axis(out_llrs, perms[:, :, None], llrs, axis=1)
        np.put_along_axis(out_mask, perms[:, :, None], fallback, axis=1)

    return BatchDetection(
        hard_indices=out_idx,
        hard_bits=c.labels[out_idx].copy(),
        llrs=out_llrs,
        fallback_mask=out_mask,
        block_evals=b * expected_block_evals(k, l),
    )
