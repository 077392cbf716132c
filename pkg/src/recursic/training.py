"""Training of the shared detection block.

The loss is the minimum over tracked tree paths of the average per-layer
cross-entropy against the true symbols, with the tree driven by the
network's own top-k selections. Gradients are exact reverse-mode
derivatives through the minimizing path (decisions are discrete and carry
no gradient). Optimization is plain Adam over the flattened parameter set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSpec, noise_variance, rng_for
from .detector import SoftConfig, detect_multipath
from .modem import Constellation
from .network import HIDDEN, NetworkParams, _batch_activations
from .numerics import project_receive, sorted_qr_extended


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


class CalibrationError(RuntimeError):
    """Raised when clip calibration collects no usable values."""


@dataclass(frozen=True)
class TrainSample:
    """One preprocessed training instance (triangular position order)."""

    y_tilde: np.ndarray
    r: np.ndarray
    true_symbol_indices: np.ndarray
    snr_db: float


@dataclass
class TrainConfig:
    sample_count: int = 200_000
    snr_range_db: tuple[float, float] = (10.0, 30.0)
    k_train: int = 4
    batch_size: int = 512
    learning_rate: float = 1e-3
    lr_schedule: list = field(default_factory=list)  # [[epoch, lr], ...]
    epochs: int = 30
    holdout_fraction: float = 0.1
    teacher_forcing_epochs: int = 0
    seed: int = 0


def generate_dataset(cfg: TrainConfig, channel: ChannelSpec, c: Constellation,
                     rng: np.random.Generator, n_rx: int = 2,
                     n_layers: int = 2) -> list[TrainSample]:
    """Draw samples through the same preprocessing pipeline as inference."""
    low, high = cfg.snr_range_db
    samples = []
    for _ in range(cfg.sample_count):
        snr_db = float(rng.uniform(low, high))
        h = channel.sample(n_rx, n_layers, rng)
        indices = rng.integers(0, c.order, size=n_layers)
        sigma2 = noise_variance(snr_db, n_layers)
        noise = np.sqrt(sigma2 / 2.0) * (
            rng.standard_normal(n_rx) + 1j * rng.standard_normal(n_rx)
        )
        y = h @ c.points[indices] + noise
        fact = sorted_qr_extended(h, float(np.sqrt(sigma2)))
        y_tilde = project_receive(fact.q, y)
        samples.append(TrainSample(
            y_tilde=y_tilde,
            r=fact.r,
            true_symbol_indices=indices[fact.perm].astype(np.int64),
            snr_db=snr_db,
        ))
    return samples


def stack_samples(samples: list[TrainSample]) -> dict[str, np.ndarray]:
    return {
        "y_tilde": np.stack([s.y_tilde for s in samples]),
        "r": np.stack([s.r for s in samples]),
        "true": np.stack([s.true_symbol_indices for s in samples]),
        "snr_db": np.array([s.snr_db for s in samples]),
    }


def _zero_grads(p: NetworkParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(t) for name, t in p.tensors().items()}


def _backprop_rows(p: NetworkParams, acts: dict[str, np.ndarray],
                   rows: np.ndarray, dlogits: np.ndarray,
                   grads: dict[str, np.ndarray]) -> None:
    """Accumulate parameter gradients for selected rows of a batched pass."""
    h2 = acts["h2"][rows]
    g = acts["g"][rows]
    h1 = acts["h1"][rows]
    x = acts["x"][rows]
    emb = acts["emb"][rows]
    grads["w3"] += dlogits.T @ h2
    grads["b3"] += dlogits.sum(axis=0)
    dh2 = dlogits @ p.w3
    da2 = dh2 * (acts["a2"][rows] > 0)
    grads["w2"] += da2.T @ g
    grads["b2"] += da2.sum(axis=0)
    dg = da2 @ p.w2
    dts = dg * h1
    dtb = dg
    dh1 = dg * acts["t_s"][rows]
    da1 = dh1 * (acts["a1"][rows] > 0)
    grads["w1"] += da1.T @ x
    grads["b1"] += da1.sum(axis=0)
    dt = np.concatenate([dts, dtb], axis=1)
    grads["we"] += dt.T @ emb
    grads["be"] += dt.sum(axis=0)


def _tree_forward(p: NetworkParams, batch: dict[str, np.ndarray], k: int,
                  c: Constellation, teacher_forcing: bool = False):
    """Run the training tree over a batch, retaining per-stage activations.

    Returns (per-sample min-path loss, stage records). Stage t processes
    triangular position L-1-t with K^t paths per sample (a single teacher
    path when teacher_forcing is set).
    """
    y_tilde = batch["y_tilde"]
    r = batch["r"]
    true = batch["true"]
    snr = batch["snr_db"]
    b, l = true.shape
    width = 1 if teacher_forcing else k

    syms = np.zeros((b, 1, l), dtype=np.int64)
    stages = []
    ce_by_stage = []
    for t, layer in enumerate(range(l - 1, -1, -1)):
        n_paths = syms.shape[1]
        if layer == l - 1:
            interference = np.zeros((b, n_paths), dtype=np.complex128)
        else:
            pts = c.points[syms[:, :, layer + 1:]]
            interference = np.einsum("bj,bpj->bp", r[:, layer, layer + 1:], pts)
        s_tilde = (y_tilde[:, layer][:, None] - interference) / r[:, layer, layer][:, None]
        snr_in = np.repeat(snr, n_paths)
        acts = _batch_activations(p, s_tilde.reshape(-1), snr_in)
        probs = acts["probs"].reshape(b, n_paths, c.order)
        ce = -np.log(probs[np.arange(b)[:, None], np.arange(n_paths)[None, :],
                           true[:, layer][:, None]])
        stages.append({"acts": acts, "n_paths": n_paths, "layer": layer})
        ce_by_stage.append(ce)
        if teacher_forcing:
            chosen = np.broadcast_to(true[:, layer][:, None], (b, 1))
        else:
            chosen = np.argsort(-probs, axis=2, kind="stable")[:, :, :width]
            chosen = chosen.reshape(b, n_paths * width)
        syms = np.repeat(syms, width, axis=1)
        syms[:, :, layer] = chosen

    # leaf loss: average CE along each leaf's ancestor chain; a path
    # evaluated at stage t covers width^(l-t) leaves
    n_leaves = width ** l
    leaf_loss = np.zeros((b, n_leaves))
    for t, ce in enumerate(ce_by_stage):
        leaf_loss += np.repeat(ce, width ** (l - t), axis=1)
    leaf_loss /= l
    best_leaf = np.argmin(leaf_loss, axis=1)  # first minimum = lowest path index
    loss = leaf_loss[np.arange(b), best_leaf]
    return loss, stages, best_leaf, width


def loss_min_path_ce(p: NetworkParams, sample: TrainSample, k_train: int,
                     c: Constellation) -> float:
    """Minimum over tracked paths of the average per-layer cross-entropy."""
    batch = stack_samples([sample])
    loss, _, _, _ = _tree_forward(p, batch, k_train, c)
    return float(loss[0])


def loss_and_grad(p: NetworkParams, batch: dict[str, np.ndarray], k_train: int,
                  c: Constellation, teacher_forcing: bool = False
                  ) -> tuple[float, dict[str, np.ndarray]]:
    """Mean min-path loss over a batch and its exact parameter gradient.

    The gradient flows only through the per-sample minimizing path; the
    discrete symbol selections carry none.
    """
    loss, stages, best_leaf, width = _tree_forward(p, batch, k_train, c,
                                                   teacher_forcing)
    b, l = batch["true"].shape
    grads = _zero_grads(p)
    sample_rows = np.arange(b)
    for t, stage in enumerate(stages):
        n_paths = stage["n_paths"]
        layer = stage["layer"]
        ancestor = best_leaf // (width ** (l - t))
        rows = sample_rows * n_paths + ancestor
        probs_sel = stage["acts"]["probs"][rows]
        dlogits = probs_sel.copy()
        dlogits[sample_rows, batch["true"][:, layer]] -= 1.0
        dlogits /= l * b
        _backprop_rows(p, stage["acts"], rows, dlogits, grads)
    return float(loss.mean()), grads


def batch_loss(p: NetworkParams, batch: dict[str, np.ndarray], k_train: int,
               c: Constellation) -> float:
    loss, _, _, _ = _tree_forward(p, batch, k_train, c)
    return float(loss.mean())


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, p: NetworkParams) -> "AdamState":
        return cls(m=_zero_grads(p), v=_zero_grads(p))


def adam_step(p: NetworkParams, grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    state.t += 1
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    for name, tensor in p.tensors().items():
        g = grads[name]
        state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        tensor -= lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)  # (step, train_loss, holdout_loss)

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("step,train_loss,holdout_loss\n")
            for step, tr, ho in self.rows:
                fh.write(f"{step},{tr:.8f},{ho:.8f}\n")


def _lr_at(cfg: TrainConfig, epoch: int) -> float:
    lr = cfg.learning_rate
    for start_epoch, value in sorted(cfg.lr_schedule):
        if epoch >= start_epoch:
            lr = value
    return lr


def train(cfg: TrainConfig, dataset: list[TrainSample], c: Constellation,
          init: NetworkParams | None = None
          ) -> tuple[NetworkParams, TrainLog]:
    """Mini-batch Adam on the min-path cross-entropy.

    Returns the parameter snapshot with the lowest held-out loss and the
    per-epoch training log. Deterministic for a fixed config seed.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    data = stack_samples(dataset)
    n = data["true"].shape[0]
    rng = rng_for(cfg.seed, 7)
    order = rng.permutation(n)
    n_holdout = max(1, int(round(cfg.holdout_fraction * n))) if n > 1 else 0
    holdout_idx = order[:n_holdout]
    train_idx = order[n_holdout:]
    if train_idx.size == 0:
        train_idx = order
    holdout = {k: v[holdout_idx] for k, v in data.items()} if n_holdout else None

    p = init.copy() if init is not None else None
    if p is None:
        from .network import init_params
        p = init_params(c.order, rng_for(cfg.seed, 11))
    state = AdamState.for_params(p)
    log = TrainLog()
    best_loss = math.inf
    best_params = p.copy()
    step = 0
    for epoch in range(cfg.epochs):
        lr = _lr_at(cfg, epoch)
        teacher = epoch < cfg.teacher_forcing_epochs
        epoch_order = rng_for(cfg.seed, 13, epoch).permutation(train_idx)
        epoch_losses = []
        for start in range(0, epoch_order.size, cfg.batch_size):
            idx = epoch_order[start:start + cfg.batch_size]
            batch = {k: v[idx] for k, v in data.items()}
            loss, grads = loss_and_grad(p, batch, cfg.k_train, c,
                                        teacher_forcing=teacher)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss} at step {step}")
            adam_step(p, grads, state, lr)
            epoch_losses.append(loss)
            step += 1
        if holdout is not None:
            holdout_loss = batch_loss(p, holdout, cfg.k_train, c)
        else:
            holdout_loss = float(np.mean(epoch_losses))
        log.rows.append((step, float(np.mean(epoch_losses)), holdout_loss))
        if holdout_loss < best_loss:
            best_loss = holdout_loss
            best_params = p.copy()
    return best_params, log


def estimate_llr_clip(p: NetworkParams, calibration: list[TrainSample],
                      cfg: SoftConfig, c: Constellation) -> float:
    """Clip magnitude as twice the nearest-rank 95th percentile of |LLR|.

    Detection runs with clipping disabled; fallback-derived values are
    excluded from the pool.
    """
    if not calibration:
        raise CalibrationError("calibration set is empty")
    open_cfg = SoftConfig(k=cfg.k, llr_max=np.inf, alpha=cfg.alpha,
                          eps_max=None, snr_input=cfg.snr_input)
    pool = []
    for sample in calibration:
        _, result = detect_multipath(p, sample.y_tilde, sample.r, c,
                                     open_cfg, sample.snr_db)
        keep = ~result.diagnostics.fallback_mask
        pool.append(np.abs(result.llrs[keep]))
    values = np.concatenate(pool)
    if values.size == 0:
        raise CalibrationError("all collected LLRs came from the fallback path")
    return 2.0 * nearest_rank_percentile(values, 95.0)


def nearest_rank_percentile(values: np.ndarray, pct: float) -> float:
    """Nearest-rank percentile: the ceil(pct/100 * n)-th smallest value."""
    values = np.sort(np.asarray(values).ravel())
    if values.size == 0:
        raise ValueError("empty value pool")
    rank = max(1, int(math.ceil(pct / 100.0 * values.size)))
    return float(values[rank - 1])
