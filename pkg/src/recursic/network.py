"""The shared per-stage network block.

One block maps a scalar equalized observation plus the operating SNR to a
probability vector over the constellation. The same weights are reused at
every detection stage and every SNR; SNR conditioning enters through a
sinusoidal embedding projected to an elementwise scale and bias that
modulate the first hidden activation (applied after its nonlinearity).

Sizes are fixed: two hidden layers of width 16, a 16-dimensional embedding
projected to 32 values (16 scale + 16 bias), and an M-way output, giving
864 + 17*M parameters and 816 + 16*M multiply-accumulates per evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

HIDDEN = 16
EMBED_DIM = 16
# The scale/bias pair could equally modulate either hidden layer without
# changing the cost accounting; this package fixes the first.
FILM_AFTER_LAYER = 1

WEIGHT_LAYOUT_VERSION = 1


class WeightFormatError(ValueError):
    """Raised when a weight document fails validation."""


@dataclass
class NetworkParams:
    """All trainable tensors of one block (shared across stages and SNRs)."""

    w1: np.ndarray  # (16, 2)
    b1: np.ndarray  # (16,)
    we: np.ndarray  # (32, 16) embedding projection; rows 0..15 scale, 16..31 bias
    be: np.ndarray  # (32,)
    w2: np.ndarray  # (16, 16)
    b2: np.ndarray  # (16,)
    w3: np.ndarray  # (M, 16)
    b3: np.ndarray  # (M,)

    @property
    def order(self) -> int:
        return self.w3.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> "NetworkParams":
        return NetworkParams(**{k: v.copy() for k, v in self.tensors().items()})

    def parameter_count(self) -> int:
        return sum(int(np.prod(t.shape)) for t in self.tensors().values())


def expected_shapes(m: int) -> dict[str, tuple[int, ...]]:
    return {
        "w1": (HIDDEN, 2), "b1": (HIDDEN,),
        "we": (2 * HIDDEN, EMBED_DIM), "be": (2 * HIDDEN,),
        "w2": (HIDDEN, HIDDEN), "b2": (HIDDEN,),
        "w3": (m, HIDDEN), "b3": (m,),
    }


def count_parameters(m: int) -> int:
    """Closed-form trainable parameter count for modulation order m."""
    return 864 + 17 * m


def count_macs(m: int) -> int:
    """Closed-form multiply-accumulate count of one block evaluation."""
    return 816 + 16 * m


class MacCounter:
    """Accumulates multiply-accumulate operations during a forward pass."""

    def __init__(self) -> None:
        self.total = 0

    def add(self, n: int) -> None:
        self.total += int(n)


def init_params(m: int, rng: np.random.Generator) -> NetworkParams:
    """Random initialization.

    The embedding projection starts near the identity modulation (scale 1,
    bias 0) so untrained SNR conditioning leaves activations untouched.
    """
    shapes = expected_shapes(m)
    w1 = rng.normal(0.0, 1.0, shapes["w1"])
    w2 = rng.normal(0.0, np.sqrt(2.0 / HIDDEN), shapes["w2"])
    w3 = rng.normal(0.0, np.sqrt(1.0 / HIDDEN), shapes["w3"])
    we = rng.normal(0.0, 0.01, shapes["we"])
    be = np.concatenate([np.ones(HIDDEN), np.zeros(HIDDEN)])
    return NetworkParams(
        w1=w1, b1=np.zeros(HIDDEN), we=we, be=be,
        w2=w2, b2=np.zeros(HIDDEN), w3=w3, b3=np.zeros(m),
    )


def snr_embedding(snr_db: float) -> np.ndarray:
    """Sinusoidal positional embedding of the SNR value in dB.

    Eight frequency pairs: slot 2i is sin(snr / 10000^(2i/16)) and slot
    2i+1 the matching cosine.
    """
    i = np.arange(EMBED_DIM // 2)
    angle = snr_db / (10000.0 ** (2.0 * i / EMBED_DIM))
    emb = np.empty(EMBED_DIM)
    emb[0::2] = np.sin(angle)
    emb[1::2] = np.cos(angle)
    return emb


def _matvec(w: np.ndarray, x: np.ndarray, counter: MacCounter | None) -> np.ndarray:
    if counter is not None:
        counter.add(w.shape[0] * w.shape[1])
    return w @ x


def film_vectors(p: NetworkParams, snr_db: float,
                 counter: MacCounter | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Scale and bias vectors derived from the SNR embedding."""
    t = _matvec(p.we, snr_embedding(snr_db), counter) + p.be
    return t[:HIDDEN], t[HIDDEN:]


def block_forward(p: NetworkParams, s_tilde: complex, snr_db: float,
                  counter: MacCounter | None = None) -> np.ndarray:
    """Symbol probability vector for one equalized observation.

    Output is a length-M simplex vector (softmax), strictly positive.
    """
    if not (np.isfinite(s_tilde.real) and np.isfinite(s_tilde.imag) and np.isfinite(snr_db)):
        raise ValueError("inputs must be finite")
    x = np.array([s_tilde.real, s_tilde.imag])
    h1 = np.maximum(_matvec(p.w1, x, counter) + p.b1, 0.0)
    t_s, t_b = film_vectors(p, snr_db, counter)
    if counter is not None:
        counter.add(HIDDEN)  # elementwise scale
    g = h1 * t_s + t_b
    h2 = np.maximum(_matvec(p.w2, g, counter) + p.b2, 0.0)
    logits = _matvec(p.w3, h2, counter) + p.b3
    return softmax(logits)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def block_forward_batch(p: NetworkParams, s_tilde: np.ndarray,
                        snr_db: np.ndarray) -> np.ndarray:
    """Vectorized block evaluation.

    s_tilde and snr_db are broadcast-compatible 1-D arrays; returns
    probabilities of shape (batch, M). Matches block_forward elementwise.
    """
    s_tilde = np.asarray(s_tilde, dtype=np.complex128).reshape(-1)
    snr_db = np.broadcast_to(np.asarray(snr_db, dtype=np.float64).reshape(-1),
                             s_tilde.shape)
    acts = _batch_activations(p, s_tilde, snr_db)
    return acts["probs"]


def _batch_activations(p: NetworkParams, s_tilde: np.ndarray,
                       snr_db: np.ndarray) -> dict[str, np.ndarray]:
    """Forward pass retaining intermediates, for reuse by backprop."""
    x = np.stack([s_tilde.real, s_tilde.imag], axis=1)  # (B, 2)
    a1 = x @ p.w1.T + p.b1
    h1 = np.maximum(a1, 0.0)
    i = np.arange(EMBED_DIM // 2)
    angle = snr_db[:, None] / (10000.0 ** (2.0 * i / EMBED_DIM))[None, :]
    emb = np.empty((snr_db.shape[0], EMBED_DIM))
    emb[:, 0::2] = np.sin(angle)
    emb[:, 1::2] = np.cos(angle)
    t = emb @ p.we.T + p.be
    t_s, t_b = t[:, :HIDDEN], t[:, HIDDEN:]
    g = h1 * t_s + t_b
    a2 = g @ p.w2.T + p.b2
    h2 = np.maximum(a2, 0.0)
    logits = h2 @ p.w3.T + p.b3
    return {
        "x": x, "a1": a1, "h1": h1, "emb": emb, "t_s": t_s, "t_b": t_b,
        "g": g, "a2": a2, "h2": h2, "probs": softmax(logits),
    }


def save_weights(p: NetworkParams, path: str) -> None:
    """Write weights as a self-describing JSON document."""
    doc = {
        "modulation_order": p.order,
        "layout_version": WEIGHT_LAYOUT_VERSION,
        "tensors": {
            name: {"shape": list(t.shape), "values": t.reshape(-1).tolist()}
            for name, t in p.tensors().items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_weights(path: str) -> NetworkParams:
    """Load and validate a weight document."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    for key in ("modulation_order", "layout_version", "tensors"):
        if key not in doc:
            raise WeightFormatError(f"missing field {key!r}")
    if doc["layout_version"] != WEIGHT_LAYOUT_VERSION:
        raise WeightFormatError(f"unsupported layout_version {doc['layout_version']}")
    m = int(doc["modulation_order"])
    shapes = expected_shapes(m)
    tensors = {}
    for name, shape in shapes.items():
        if name not in doc["tensors"]:
            raise WeightFormatError(f"missing tensor {name!r}")
        entry = doc["tensors"][name]
        if tuple(entry["shape"]) != shape:
            raise WeightFormatError(
                f"tensor {name!r} has shape {entry['shape']}, expected {list(shape)}"
            )
        values = np.asarray(entry["values"], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise WeightFormatError(f"tensor {name!r} has wrong element count")
        tensors[name] = values.reshape(shape)
    p = NetworkParams(**tensors)
    if p.parameter_count() != count_parameters(m):
        raise WeightFormatError(
            f"parameter count {p.parameter_count()} != {count_parameters(m)}"
        )
    if not all(np.all(np.isfinite(t)) for t in tensors.values()):
        raise WeightFormatError("non-finite tensor values")
    return p
