"""Configuration-driven Monte Carlo sweeps.

Uncoded sweeps estimate BER per (detector, SNR); coded sweeps push LLRs
through the LDPC chain and report BLER and relative throughput. Channel
realizations are derived from (seed, point index, chunk index) only, so
every detector at a grid point consumes the identical stream of channel
uses regardless of worker count.

CSV rows follow the fixed header
``detector,snr_db,metric,value,trials,ci95,seconds,block_evals``; the
trials column counts the Bernoulli units behind the value (bits for BER,
codewords for BLER/throughput).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import classic
from .channel import ChannelSpec, noise_variance, rng_for
from .detector import SoftConfig, detect_multipath_batch, expected_block_evals
from .ldpc import Encoder, MinSumDecoder, ParityCheckMatrix, load_alist
from .modem import Constellation, make_qam
from .network import NetworkParams, load_weights
from .numerics import project_receive, sorted_qr_extended

CSV_HEADER = ["detector", "snr_db", "metric", "value", "trials", "ci95",
              "seconds", "block_evals"]

DEFAULT_CHUNK = 2000


class ConfigError(ValueError):
    """Raised on invalid sweep configuration documents."""


@dataclass(frozen=True)
class DetectorSpec:
    id: str
    type: str  # ml | mmse | zf-sic | mmse-sic | recursic
    k: int = 1
    llr_max: float = math.inf
    alpha: float = 0.2
    eps_max: float | None = None
    snr_input: str = "global"
    weights: str | None = None

    def soft_config(self) -> SoftConfig:
        return SoftConfig(k=self.k, llr_max=self.llr_max, alpha=self.alpha,
                          eps_max=self.eps_max, snr_input=self.snr_input)


@dataclass(frozen=True)
class SweepConfig:
    modulation_order: int
    n_rx: int
    n_layers: int
    channel: ChannelSpec
    snr_db: tuple
    detectors: tuple
    trials: int
    seed: int
    out: str | None = None
    alist: str | None = None
    max_iters: int = 25
    norm_factor: float = 0.75
    workers: int = 1
    chunk_size: int = DEFAULT_CHUNK


@dataclass
class SweepRow:
    detector: str
    snr_db: float
    metric: str
    value: float
    trials: int
    ci95: float
    seconds: float
    block_evals: int

    def as_list(self) -> list:
        return [self.detector, f"{self.snr_db:g}", self.metric,
                f"{self.value:.10g}", str(self.trials), f"{self.ci95:.6g}",
                f"{self.seconds:.6g}", str(self.block_evals)]


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054
                    ) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / trials
                                   + z * z / (4 * trials * trials))
    return max(0.0, center - half), min(1.0, center + half)


def wilson_halfwidth(successes: int, trials: int) -> float:
    lo, hi = wilson_interval(successes, trials)
    return (hi - lo) / 2.0


# ---------------------------------------------------------------------------
# configuration parsing

_DETECTOR_FIELDS = {"id", "type", "k", "llr_max", "alpha", "eps_max",
                    "snr_input", "weights"}
_CONFIG_FIELDS = {"modulation_order", "n_rx", "n_layers", "channel", "snr_db",
                  "detectors", "trials", "seed", "out", "alist", "max_iters",
                  "norm_factor", "workers", "chunk_size"}
_CHANNEL_FIELDS = {"kind", "rho_rx", "rho_tx"}
_DETECTOR_TYPES = {"ml", "mmse", "zf-sic", "mmse-sic", "recursic"}


def _require(doc: dict, key: str, kind, what: str):
    if key not in doc:
        raise ConfigError(f"missing required field {key!r} in {what}")
    value = doc[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"field {key!r} in {what} must be {kind}, got {type(value)}")
    return value


def parse_config(path: str) -> SweepConfig:
    """Load and validate a sweep configuration document (strict JSON)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> SweepConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")

    m = _require(doc, "modulation_order", int, "config")
    n_rx = _require(doc, "n_rx", int, "config")
    n_layers = _require(doc, "n_layers", int, "config")
    trials = _require(doc, "trials", int, "config")
    seed = _require(doc, "seed", int, "config")
    if trials < 1:
        raise ConfigError("field 'trials' must be >= 1")

    chan_doc = _require(doc, "channel", dict, "config")
    unknown = set(chan_doc) - _CHANNEL_FIELDS
    if unknown:
        raise ConfigError(f"unknown channel fields: {sorted(unknown)}")
    kind = _require(chan_doc, "kind", str, "channel")
    if kind not in ("iid", "kronecker"):
        raise ConfigError(f"channel kind must be 'iid' or 'kronecker', got {kind!r}")
    channel = ChannelSpec(kind=kind,
                          rho_rx=float(chan_doc.get("rho_rx", 0.0)),
                          rho_tx=float(chan_doc.get("rho_tx", 0.0)))

    grid = _require(doc, "snr_db", list, "config")
    if not grid:
        raise ConfigError("field 'snr_db' must be a non-empty list")
    snr_db = tuple(float(v) for v in grid)

    det_docs = _require(doc, "detectors", list, "config")
    if not det_docs:
        raise ConfigError("field 'detectors' must be a non-empty list")
    detectors = []
    for i, det in enumerate(det_docs):
        if not isinstance(det, dict):
            raise ConfigError(f"detector entry {i} must be an object")
        unknown = set(det) - _DETECTOR_FIELDS
        if unknown:
            raise ConfigError(f"unknown fields in detector entry {i}: {sorted(unknown)}")
        det_id = _require(det, "id", str, f"detector {i}")
        det_type = _require(det, "type", str, f"detector {i}")
        if det_type not in _DETECTOR_TYPES:
            raise ConfigError(
                f"detector {i} has unknown type {det_type!r}; "
                f"expected one of {sorted(_DETECTOR_TYPES)}"
            )
        spec = DetectorSpec(
            id=det_id,
            type=det_type,
            k=int(det.get("k", 1)),
            llr_max=float(det.get("llr_max", math.inf)),
            alpha=float(det.get("alpha", 0.2)),
            eps_max=(float(det["eps_max"]) if det.get("eps_max") is not None else None),
            snr_input=str(det.get("snr_input", "global")),
            weights=det.get("weights"),
        )
        if spec.type == "recursic" and spec.weights is None:
            raise ConfigError(f"detector {i} ({det_id}) needs a 'weights' file")
        detectors.append(spec)
    ids = [d.id for d in detectors]
    if len(set(ids)) != len(ids):
        raise ConfigError("detector ids must be unique")

    return SweepConfig(
        modulation_order=m, n_rx=n_rx, n_layers=n_layers, channel=channel,
        snr_db=snr_db, detectors=tuple(detectors), trials=trials, seed=seed,
        out=doc.get("out"), alist=doc.get("alist"),
        max_iters=int(doc.get("max_iters", 25)),
        norm_factor=float(doc.get("norm_factor", 0.75)),
        workers=int(doc.get("workers", 1)),
        chunk_size=int(doc.get("chunk_size", DEFAULT_CHUNK)),
    )


def write_csv(rows: list[SweepRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(row.as_list())


def read_csv_rows(path: str) -> list[SweepRow]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ConfigError(f"unexpected CSV header {header}")
        rows = []
        for rec in reader:
            rows.append(SweepRow(
                detector=rec[0], snr_db=float(rec[1]), metric=rec[2],
                value=float(rec[3]), trials=int(rec[4]), ci95=float(rec[5]),
                seconds=float(rec[6]), block_evals=int(rec[7]),
            ))
        return rows


# ---------------------------------------------------------------------------
# channel stream

def draw_chunk(cfg: SweepConfig, c: Constellation, snr_db: float,
               point_index: int, chunk_index: int, count: int) -> dict:
    """One paired chunk of channel uses, identical for every detector."""
    rng = rng_for(cfg.seed, point_index, chunk_index)
    n, l = cfg.n_rx, cfg.n_layers
    sigma2 = noise_variance(snr_db, l)
    h = np.stack([cfg.channel.sample(n, l, rng) for _ in range(count)])
    indices = rng.integers(0, c.order, size=(count, l))
    s = c.points[indices]
    noise = np.sqrt(sigma2 / 2.0) * (
        rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    )
    y = np.einsum("bnl,bl->bn", h, s) + noise
    return {"h": h, "indices": indices, "s": s, "y": y, "sigma2": sigma2,
            "snr_db": snr_db, "bits": c.labels[indices]}


def chunk_checksum(chunk: dict) -> str:
    digest = hashlib.sha256()
    for key in ("h", "s", "y"):
        digest.update(np.ascontiguousarray(chunk[key]).tobytes())
    return digest.hexdigest()


def _chunk_sizes(total: int, chunk: int) -> list[int]:
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


# ---------------------------------------------------------------------------
# detector bank

class DetectorBank:
    """Instantiated detectors plus shared per-chunk preprocessing."""

    def __init__(self, cfg: SweepConfig, c: Constellation) -> None:
        self.cfg = cfg
        self.c = c
        self.params: dict[str, NetworkParams] = {}
        for spec in cfg.detectors:
            if spec.type == "recursic":
                params = load_weights(spec.weights)
                if params.order != c.order:
                    raise ConfigError(
                        f"weights {spec.weights!r} are for order {params.order}, "
                        f"config uses {c.order}"
                    )
                self.params[spec.id] = params

    def _qrd(self, chunk: dict) -> dict:
        if "qrd" in chunk:
            return chunk["qrd"]
        sigma = float(np.sqrt(chunk["sigma2"]))
        count, l = chunk["indices"].shape
        y_tilde = np.empty((count, l), dtype=np.complex128)
        r = np.empty((count, l, l), dtype=np.complex128)
        perms = np.empty((count, l), dtype=np.int64)
        for i in range(count):
            fact = sorted_qr_extended(chunk["h"][i], sigma)
            y_tilde[i] = project_receive(fact.q, chunk["y"][i])
            r[i] = fact.r
            perms[i] = fact.perm
        chunk["qrd"] = {"y_tilde": y_tilde, "r": r, "perms": perms}
        return chunk["qrd"]

    def run(self, spec: DetectorSpec, chunk: dict, want_llrs: bool) -> dict:
        """Detect a chunk; returns hard bits, optional LLRs, block evals."""
        c = self.c
        if spec.type == "recursic":
            qrd = self._qrd(chunk)
            out = detect_multipath_batch(
                self.params[spec.id], qrd["y_tilde"], qrd["r"], c,
                spec.soft_config(), chunk["snr_db"], qrd["perms"],
            )
            return {"bits": out.hard_bits, "llrs": out.llrs,
                    "block_evals": out.block_evals}
        if spec.type == "ml":
            return self._run_ml(chunk, want_llrs)
        if spec.type == "mmse":
            return self._run_linear(chunk, want_llrs)
        if spec.type in ("zf-sic", "mmse-sic"):
            return self._run_sic(chunk, spec.type.split("-")[0], want_llrs)
        raise ConfigError(f"unknown detector type {spec.type!r}")

    def _run_ml(self, chunk: dict, want_llrs: bool) -> dict:
        c = self.c
        qrd = self._qrd(chunk)
        count, l = chunk["indices"].shape
        cand_idx = classic.enumerate_candidates(c, l)
        cand_pts = c.points[cand_idx]  # (n_cand, L)
        diff = qrd["y_tilde"][:, None, :] - np.matmul(
            cand_pts[None, :, :], np.transpose(qrd["r"], (0, 2, 1))
        )
        metrics = np.einsum("bki,bki->bk", diff.real, diff.real) + np.einsum(
            "bki,bki->bk", diff.imag, diff.imag
        )
        best = np.argmin(metrics, axis=1)
        local_idx = cand_idx[best]  # (B, L) triangular order
        rows = np.arange(count)[:, None]
        hard = np.empty_like(local_idx)
        hard[rows, qrd["perms"]] = local_idx

        llrs = None
        if want_llrs:
            nb = c.bits_per_symbol
            llrs_local = np.empty((count, l, nb))
            bits_cand = c.labels[cand_idx]  # (n_cand, L, nb)
            inv_sigma2 = 1.0 / chunk["sigma2"]
            for layer in range(l):
                for b in range(nb):
                    mask1 = bits_cand[:, layer, b] == 1
                    m1 = metrics[:, mask1].min(axis=1)
                    m0 = metrics[:, ~mask1].min(axis=1)
                    llrs_local[:, layer, b] = (m1 - m0) * inv_sigma2
            llrs = np.empty_like(llrs_local)
            np.put_along_axis(llrs, qrd["perms"][:, :, None], llrs_local, axis=1)
        return {"bits": c.labels[hard].copy(), "llrs": llrs,
                "block_evals": 0}

    def _run_linear(self, chunk: dict, want_llrs: bool) -> dict:
        c = self.c
        count, l = chunk["indices"].shape
        bits = np.empty((count, l, c.bits_per_symbol), dtype=np.uint8)
        llrs = np.empty((count, l, c.bits_per_symbol)) if want_llrs else None
        for i in range(count):
            res = classic.detect_mmse(chunk["y"][i], chunk["h"][i],
                                      chunk["sigma2"], c)
            bits[i] = res.hard_bits
            if want_llrs:
                llrs[i] = res.llrs
        return {"bits": bits, "llrs": llrs, "block_evals": 0}

    def _run_sic(self, chunk: dict, mode: str, want_llrs: bool) -> dict:
        c = self.c
        count, l = chunk["indices"].shape
        bits = np.empty((count, l, c.bits_per_symbol), dtype=np.uint8)
        llrs = np.empty((count, l, c.bits_per_symbol)) if want_llrs else None
        for i in range(count):
            res = classic.detect_sic(chunk["y"][i], chunk["h"][i],
                                     chunk["sigma2"], c, mode=mode)
            bits[i] = res.hard_bits
            if want_llrs:
                llrs[i] = res.llrs
        return {"bits": bits, "llrs": llrs, "block_evals": 0}


# ---------------------------------------------------------------------------
# sweeps

def _uncoded_chunk_task(args) -> dict:
    cfg, point_index, snr_db, chunk_index, count = args
    c = make_qam(cfg.modulation_order)
    bank = DetectorBank(cfg, c)
    chunk = draw_chunk(cfg, c, snr_db, point_index, chunk_index, count)
    out = {}
    for spec in cfg.detectors:
        start = time.perf_counter()
        res = bank.run(spec, chunk, want_llrs=False)
        errors = int(np.sum(res["bits"] != chunk["bits"]))
        out[spec.id] = {
            "errors": errors,
            "bits": chunk["bits"].size,
            "block_evals": res["block_evals"],
            "seconds": time.perf_counter() - start,
        }
    return out


def run_uncoded_sweep(cfg: SweepConfig) -> list[SweepRow]:
    """Paired BER estimation over the SNR grid."""
    rows: list[SweepRow] = []
    for point_index, snr_db in enumerate(cfg.snr_db):
        sizes = _chunk_sizes(cfg.trials, cfg.chunk_size)
        tasks = [(cfg, point_index, snr_db, ci, size)
                 for ci, size in enumerate(sizes)]
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_uncoded_chunk_task, tasks))
        else:
            results = [_uncoded_chunk_task(t) for t in tasks]
        for spec in cfg.detectors:
            errors = sum(r[spec.id]["errors"] for r in results)
            bits = sum(r[spec.id]["bits"] for r in results)
            evals = sum(r[spec.id]["block_evals"] for r in results)
            seconds = sum(r[spec.id]["seconds"] for r in results)
            rows.append(SweepRow(
                detector=spec.id, snr_db=snr_db, metric="ber",
                value=errors / bits, trials=bits,
                ci95=wilson_halfwidth(errors, bits),
                seconds=seconds, block_evals=evals,
            ))
    return rows


def shipped_alist_path() -> str:
    return str(resources.files("recursic").joinpath("data/n96_rate12.alist"))


def _coded_chunk_task(args) -> dict:
    cfg, point_index, snr_db, chunk_index, n_codewords, hm = args
    c = make_qam(cfg.modulation_order)
    bank = DetectorBank(cfg, c)
    encoder = Encoder(hm)
    decoder = MinSumDecoder(hm)
    l, nb = cfg.n_layers, c.bits_per_symbol
    bits_per_use = l * nb
    uses_per_cw = hm.n // bits_per_use

    rng = rng_for(cfg.seed, point_index, chunk_index)
    info = rng.integers(0, 2, size=(n_codewords, encoder.k), dtype=np.uint8)
    codewords = np.stack([encoder.encode(b) for b in info])
    # map codeword bits onto symbols: per use, per layer, nb bits
    grouped = codewords.reshape(n_codewords, uses_per_cw, l, nb)
    weights = 1 << np.arange(nb - 1, -1, -1)
    indices = (grouped * weights).sum(axis=3)  # (cw, use, layer)
    flat_idx = indices.reshape(n_codewords * uses_per_cw, l)

    sigma2 = noise_variance(snr_db, l)
    n = cfg.n_rx
    count = flat_idx.shape[0]
    h = np.stack([cfg.channel.sample(n, l, rng) for _ in range(count)])
    s = c.points[flat_idx]
    noise = np.sqrt(sigma2 / 2.0) * (
        rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    )
    y = np.einsum("bnl,bl->bn", h, s) + noise
    chunk = {"h": h, "indices": flat_idx, "s": s, "y": y, "sigma2": sigma2,
             "snr_db": snr_db, "bits": c.labels[flat_idx]}

    out = {}
    for spec in cfg.detectors:
        start = time.perf_counter()
        res = bank.run(spec, chunk, want_llrs=True)
        llrs = res["llrs"].reshape(n_codewords, uses_per_cw, l, nb)
        llrs = llrs.reshape(n_codewords, hm.n)
        block_errors = 0
        for cw in range(n_codewords):
            decoded, _, _ = decoder.decode(llrs[cw], max_iters=cfg.max_iters,
                                           norm_factor=cfg.norm_factor)
            if np.any(decoded[encoder.info_positions] != info[cw]):
                block_errors += 1
        out[spec.id] = {
            "block_errors": block_errors,
            "codewords": n_codewords,
            "block_evals": res["block_evals"],
            "seconds": time.perf_counter() - start,
        }
    return out


def run_coded_sweep(cfg: SweepConfig, code: ParityCheckMatrix | None = None
                    ) -> list[SweepRow]:
    """Paired BLER / relative-throughput estimation over the SNR grid."""
    if code is None:
        path = cfg.alist or shipped_alist_path()
        code = load_alist(path)
    c = make_qam(cfg.modulation_order)
    bits_per_use = cfg.n_layers * c.bits_per_symbol
    if code.n % bits_per_use != 0:
        raise ConfigError(
            f"codeword length {code.n} is not divisible by the "
            f"{bits_per_use} bits per channel use"
        )
    rows: list[SweepRow] = []
    cw_chunk = max(1, cfg.chunk_size // (code.n // bits_per_use))
    for point_index, snr_db in enumerate(cfg.snr_db):
        sizes = _chunk_sizes(cfg.trials, cw_chunk)
        tasks = [(cfg, point_index, snr_db, ci, size, code)
                 for ci, size in enumerate(sizes)]
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_coded_chunk_task, tasks))
        else:
            results = [_coded_chunk_task(t) for t in tasks]
        for spec in cfg.detectors:
            errors = sum(r[spec.id]["block_errors"] for r in results)
            total = sum(r[spec.id]["codewords"] for r in results)
            evals = sum(r[spec.id]["block_evals"] for r in results)
            seconds = sum(r[spec.id]["seconds"] for r in results)
            bler = errors / total
            half = wilson_halfwidth(errors, total)
            rows.append(SweepRow(spec.id, snr_db, "bler", bler, total, half,
                                 seconds, evals))
            rows.append(SweepRow(spec.id, snr_db, "throughput", 1.0 - bler,
                                 total, half, seconds, evals))
    return rows


def summarize(rows: list[SweepRow]) -> str:
    """Plain-text summary table, grouped by metric then detector."""
    lines = []
    width = max([len(r.detector) for r in rows] + [8])
    for metric in ("ber", "bler", "throughput"):
        subset = [r for r in rows if r.metric == metric]
        if not subset:
            continue
        lines.append(f"== {metric} ==")
        lines.append(f"{'detector':<{width}}  {'snr_db':>8}  {'value':>12}  "
                     f"{'ci95':>10}  {'trials':>10}")
        for row in sorted(subset, key=lambda r: (r.detector, r.snr_db)):
            lines.append(
                f"{row.detector:<{width}}  {row.snr_db:>8g}  {row.value:>12.6g}  "
                f"{row.ci95:>10.3g}  {row.trials:>10}"
            )
    return "\n".join(lines)
