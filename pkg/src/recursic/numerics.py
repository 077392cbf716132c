"""Complex dense linear algebra for layer-recursive MIMO detection.

Provides thin QR factorization (plain and sorted/extended), receive-signal
projection onto the Q basis, and squared-residual metrics. Matrices are plain
complex128 numpy arrays; factorizations keep the diagonal of R real and
non-negative so the per-layer scaling is phase-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RECONSTRUCTION_TOL = 1e-10
RANK_TOL = 1e-12


class RankDeficientError(ValueError):
    """Raised when a matrix is numerically rank deficient."""


class DimensionError(ValueError):
    """Raised on incompatible array shapes."""


@dataclass(frozen=True)
class QrFactorization:
    """Thin QR factorization ``A[:, perm] = q @ r``.

    q has orthonormal columns, r is upper triangular with a real
    non-negative diagonal, and perm records the column ordering
    (``perm[j]`` is the original column placed at position j).
    """

    q: np.ndarray
    r: np.ndarray
    perm: np.ndarray


def _as_complex_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a.view(np.float64))):
        raise ValueError("matrix entries must be finite")
    return a


def _mgs(a: np.ndarray, pivot: bool) -> QrFactorization:
    """Modified Gram-Schmidt with one reorthogonalization pass.

    With pivot=True the remaining column of minimum residual norm is
    processed first at every step (sorted QR); ties go to the lowest
    original column index.
    """
    m, n = a.shape
    if m < n:
        raise DimensionError(f"need rows >= cols, got {m}x{n}")
    rank_floor = RANK_TOL * np.linalg.norm(a)

    q = a.astype(np.complex128, copy=True)
    r = np.zeros((n, n), dtype=np.complex128)
    perm = np.arange(n)

    for j in range(n):
        if pivot:
            norms = np.linalg.norm(q[:, j:], axis=0)
            # argmin returns the first minimum; remaining columns stay in
            # ascending original-index order, so ties pick the lowest index.
            pick = j + int(np.argmin(norms))
            if pick != j:
                q[:, [j, pick]] = q[:, [pick, j]]
                r[:j, [j, pick]] = r[:j, [pick, j]]
                perm[[j, pick]] = perm[[pick, j]]

        v = q[:, j]
        if j > 0:
            # Second orthogonalization pass; the first happened in-place
            # when earlier columns were eliminated.
            h = q[:, :j].conj().T @ v
            v = v - q[:, :j] @ h
            r[:j, j] += h

        norm = np.linalg.norm(v)
        if norm <= rank_floor:
            raise RankDeficientError(
                f"column {int(perm[j])} is numerically dependent (|R_jj|={norm:.3e})"
            )
        r[j, j] = norm
        q[:, j] = v / norm
        if j + 1 < n:
            coeffs = q[:, j].conj() @ q[:, j + 1:]
            r[j, j + 1:] = coeffs
            q[:, j + 1:] -= np.outer(q[:, j], coeffs)

    return QrFactorization(q=q, r=r, perm=perm)


def qr_decompose(a) -> QrFactorization:
    """Thin QR of a tall matrix with the identity column permutation."""
    return _mgs(_as_complex_matrix(a), pivot=False)


def sorted_qr_extended(h, sigma: float) -> QrFactorization:
    """Sorted QR of the extended matrix ``[h; sigma*I]``.

    The column pivoting eliminates the weakest remaining layer first, which
    places the strongest layer at the last diagonal position so detection
    can start from the largest ``|R[L-1, L-1]|``. The returned q is the full
    (N+L) x L factor; perm records the layer reordering.
    """
    h = _as_complex_matrix(h)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    n_rx, n_layers = h.shape
    ext = np.vstack([h, sigma * np.eye(n_layers, dtype=np.complex128)])
    return _mgs(ext, pivot=True)


def project_receive(q, y) -> np.ndarray:
    """Project the received vector onto the Q basis: ``Q1^H y``.

    Q1 is the top block of q matching the length of y. For an extended
    factorization this equals ``Q^H [y; 0]`` exactly.
    """
    q = _as_complex_matrix(q)
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    n_cols = q.shape[1]
    if q.shape[0] == y.shape[0]:
        q1 = q
    elif q.shape[0] == y.shape[0] + n_cols:
        q1 = q[: y.shape[0], :]
    else:
        raise DimensionError(
            f"q has {q.shape[0]} rows; expected {y.shape[0]} or {y.shape[0] + n_cols}"
        )
    return q1.conj().T @ y


def batch_residual_metrics(y_tilde: np.ndarray, r: np.ndarray,
                           candidates: np.ndarray) -> np.ndarray:
    """Squared residuals ``|y_tilde - r @ s|^2`` for many candidates at once.

    candidates has shape (n_cand, L); returns shape (n_cand,). Detectors that
    must agree on ties all route their metric evaluation through this one
    function so per-candidate values are computed identically.
    """
    diff = y_tilde[np.newaxis, :] - candidates @ r.T
    return np.einsum("ki,ki->k", diff.real, diff.real) + np.einsum(
        "ki,ki->k", diff.imag, diff.imag
    )


def residual_metric(y_tilde, r, s) -> float:
    """Squared Euclidean norm of ``y_tilde - r @ s``."""
    y_tilde = np.asarray(y_tilde, dtype=np.complex128).reshape(-1)
    r = np.asarray(r, dtype=np.complex128)
    s = np.asarray(s, dtype=np.complex128).reshape(-1)
    if r.shape != (y_tilde.shape[0], s.shape[0]):
        raise DimensionError(
            f"shape mismatch: y_tilde {y_tilde.shape}, r {r.shape}, s {s.shape}"
        )
    return float(batch_residual_metrics(y_tilde, r, s[np.newaxis, :])[0])
