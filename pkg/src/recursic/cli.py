"""Command-line entry points.

Subcommands: train, calibrate, sweep-uncoded, sweep-coded, report. All take
a JSON config via --config; --seed overrides the config seed, --out the
output path, --workers the process count for sweeps.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .channel import ChannelSpec, rng_for
from .harness import (ConfigError, parse_config, read_csv_rows, run_coded_sweep,
                      run_uncoded_sweep, summarize, write_csv)
from .modem import make_qam
from .network import load_weights, save_weights
from .training import (TrainConfig, estimate_llr_clip, generate_dataset, train)
from .detector import SoftConfig

_TRAIN_FIELDS = {"modulation_order", "n_rx", "n_layers", "channel",
                 "sample_count", "snr_range_db", "k_train", "batch_size",
                 "learning_rate", "lr_schedule", "epochs", "holdout_fraction",
                 "teacher_forcing_epochs", "seed", "out"}
_CALIB_FIELDS = {"modulation_order", "n_rx", "n_layers", "channel", "weights",
                 "sample_count", "snr_range_db", "k", "alpha", "snr_input",
                 "seed", "out"}


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    return doc


def _channel_from(doc: dict) -> ChannelSpec:
    chan = doc.get("channel", {"kind": "iid"})
    if not isinstance(chan, dict) or "kind" not in chan:
        raise ConfigError("field 'channel' must be an object with a 'kind'")
    return ChannelSpec(kind=chan["kind"], rho_rx=float(chan.get("rho_rx", 0.0)),
                       rho_tx=float(chan.get("rho_tx", 0.0)))


def _check_fields(doc: dict, allowed: set, what: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown fields in {what}: {sorted(unknown)}")
    if "seed" not in doc:
        raise ConfigError(f"missing required field 'seed' in {what}")


def cmd_train(args) -> int:
    doc = _load_json(args.config)
    _check_fields(doc, _TRAIN_FIELDS, "train config")
    if args.seed is not None:
        doc["seed"] = args.seed
    cfg = TrainConfig(
        sample_count=int(doc.get("sample_count", 200_000)),
        snr_range_db=tuple(doc.get("snr_range_db", [10.0, 30.0])),
        k_train=int(doc.get("k_train", 4)),
        batch_size=int(doc.get("batch_size", 512)),
        learning_rate=float(doc.get("learning_rate", 1e-3)),
        lr_schedule=list(doc.get("lr_schedule", [])),
        epochs=int(doc.get("epochs", 30)),
        holdout_fraction=float(doc.get("holdout_fraction", 0.1)),
        teacher_forcing_epochs=int(doc.get("teacher_forcing_epochs", 0)),
        seed=int(doc["seed"]),
    )
    c = make_qam(int(doc.get("modulation_order", 16)))
    channel = _channel_from(doc)
    n_rx = int(doc.get("n_rx", 2))
    n_layers = int(doc.get("n_layers", 2))
    out = args.out or doc.get("out")
    if not out:
        raise ConfigError("no output path: pass --out or set 'out' in the config")

    print(f"generating {cfg.sample_count} samples ...", flush=True)
    dataset = generate_dataset(cfg, channel, c, rng_for(cfg.seed, 1),
                               n_rx=n_rx, n_layers=n_layers)
    print(f"training for {cfg.epochs} epochs ...", flush=True)
    params, log = train(cfg, dataset, c)
    save_weights(params, out)
    log.write_csv(out + ".log.csv")
    print(f"wrote weights to {out} and log to {out}.log.csv")
    return 0


def cmd_calibrate(args) -> int:
    doc = _load_json(args.config)
    _check_fields(doc, _CALIB_FIELDS, "calibrate config")
    if args.seed is not None:
        doc["seed"] = args.seed
    if "weights" not in doc:
        raise ConfigError("missing required field 'weights' in calibrate config")
    params = load_weights(doc["weights"])
    c = make_qam(int(doc.get("modulation_order", params.order)))
    channel = _channel_from(doc)
    cfg = TrainConfig(
        sample_count=int(doc.get("sample_count", 5000)),
        snr_range_db=tuple(doc.get("snr_range_db", [10.0, 30.0])),
        seed=int(doc["seed"]),
    )
    soft = SoftConfig(k=int(doc.get("k", 4)), alpha=float(doc.get("alpha", 0.2)),
                      snr_input=str(doc.get("snr_input", "global")))
    calib = generate_dataset(cfg, channel, c, rng_for(cfg.seed, 2),
                             n_rx=int(doc.get("n_rx", 2)),
                             n_layers=int(doc.get("n_layers", 2)))
    llr_max = estimate_llr_clip(params, calib, soft, c)
    payload = {"llr_max": llr_max, "eps_max": 0.1 * llr_max}
    out = args.out or doc.get("out")
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
        print(f"wrote {out}")
    print(json.dumps(payload))
    return 0


def _sweep_common(args):
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.workers is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)
    out = args.out or cfg.out
    if not out:
        raise ConfigError("no output path: pass --out or set 'out' in the config")
    return cfg, out


def cmd_sweep_uncoded(args) -> int:
    cfg, out = _sweep_common(args)
    rows = run_uncoded_sweep(cfg)
    write_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_sweep_coded(args) -> int:
    cfg, out = _sweep_common(args)
    rows = run_coded_sweep(cfg)
    write_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.csv:
        rows.extend(read_csv_rows(path))
    print(summarize(rows))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="recursic",
        description="MIMO detection toolkit: training, calibration, and "
                    "Monte Carlo BER/BLER sweeps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, workers=False):
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out", default=None, help="output path")
        if workers:
            p.add_argument("--workers", type=int, default=None,
                           help="parallel worker processes")

    p_train = sub.add_parser("train", help="train the detection block")
    add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_cal = sub.add_parser("calibrate", help="estimate the LLR clip level")
    add_common(p_cal)
    p_cal.set_defaults(func=cmd_calibrate)

    p_unc = sub.add_parser("sweep-uncoded", help="uncoded BER sweep")
    add_common(p_unc, workers=True)
    p_unc.set_defaults(func=cmd_sweep_uncoded)

    p_cod = sub.add_parser("sweep-coded", help="coded BLER/throughput sweep")
    add_common(p_cod, workers=True)
    p_cod.set_defaults(func=cmd_sweep_coded)

    p_rep = sub.add_parser("report", help="print a summary table from CSVs")
    p_rep.add_argument("csv", nargs="+", help="sweep CSV files")
    p_rep.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
