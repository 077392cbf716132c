"""Render sweep CSVs into the two-panel detection figure.

The input is the sweep CSV contract of the detection toolkit (fixed header
``detector,snr_db,metric,value,trials,ci95,seconds,block_evals``). The top
panel shows uncoded BER on a log axis, the bottom panel relative throughput
(taken from throughput rows, or derived as 1 - BLER when only BLER rows are
present), both with 95% confidence error bars.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

CSV_HEADER = ["detector", "snr_db", "metric", "value", "trials", "ci95",
              "seconds", "block_evals"]


class RenderError(ValueError):
    """Raised on malformed input or an empty selection."""


@dataclass(frozen=True)
class FigureSpec:
    """What to read, which detectors to show, and where to write."""

    csv_paths: list
    labels: dict  # detector id -> display label (str) or {label, color, marker}
    out_path: str
    metrics: tuple = ("ber", "throughput")
    title: str | None = None
    overwrite: bool = False


@dataclass
class SweepPoint:
    detector: str
    snr_db: float
    metric: str
    value: float
    ci95: float


def read_rows(paths) -> list[SweepPoint]:
    rows = []
    for path in paths:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != CSV_HEADER:
                raise RenderError(
                    f"{path}: expected columns {CSV_HEADER}, got {header}"
                )
            for rec in reader:
                rows.append(SweepPoint(
                    detector=rec[0], snr_db=float(rec[1]), metric=rec[2],
                    value=float(rec[3]), ci95=float(rec[5]),
                ))
    return rows


def _style_of(entry, fallback_color):
    if isinstance(entry, str):
        return {"label": entry, "color": fallback_color, "marker": "o",
                "linestyle": "-"}
    style = {"label": entry.get("label", "?"),
             "color": entry.get("color", fallback_color),
             "marker": entry.get("marker", "o"),
             "linestyle": entry.get("linestyle", "-")}
    return style


def _series(rows, detector, metric):
    pts = sorted((r.snr_db, r.value, r.ci95) for r in rows
                 if r.detector == detector and r.metric == metric)
    return ([p[0] for p in pts], [p[1] for p in pts], [p[2] for p in pts])


def render(spec: FigureSpec) -> str:
    """Write the figure; returns the output path."""
    rows = read_rows(spec.csv_paths)
    if not rows:
        raise RenderError("no data rows in the selected CSV files")
    present = {r.detector for r in rows}
    missing = set(spec.labels) - present
    if missing:
        raise RenderError(f"detectors not present in the CSVs: {sorted(missing)}")
    if not spec.labels:
        raise RenderError("empty detector selection")
    if os.path.exists(spec.out_path) and not spec.overwrite:
        raise RenderError(
            f"output {spec.out_path!r} exists; pass overwrite to replace it"
        )

    # derive throughput from BLER rows when no explicit throughput rows exist
    have_tp = {(r.detector, r.snr_db) for r in rows if r.metric == "throughput"}
    derived = [SweepPoint(r.detector, r.snr_db, "throughput",
                          1.0 - r.value, r.ci95)
               for r in rows
               if r.metric == "bler" and (r.detector, r.snr_db) not in have_tp]
    rows = rows + derived

    panels = [m for m in spec.metrics if m in ("ber", "throughput")]
    if not panels:
        raise RenderError(f"no plottable metrics in {spec.metrics}")

    cycle = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    fig, axes = plt.subplots(len(panels), 1, figsize=(6.4, 3.4 * len(panels)),
                             sharex=True, squeeze=False)
    drew_anything = False
    for ax, metric in zip(axes[:, 0], panels):
        for i, (det, entry) in enumerate(spec.labels.items()):
            style = _style_of(entry, cycle[i % len(cycle)])
            x, y, err = _series(rows, det, metric)
            if not x:
                continue
            ax.errorbar(x, y, yerr=err, capsize=2.5, **style)
            drew_anything = True
        if metric == "ber":
            ax.set_yscale("log")
            ax.set_ylabel("uncoded BER")
        else:
            ax.set_ylabel("relative throughput")
            ax.set_ylim(-0.02, 1.02)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
    axes[-1, 0].set_xlabel("SNR (dB)")
    if spec.title:
        axes[0, 0].set_title(spec.title)
    if not drew_anything:
        plt.close(fig)
        raise RenderError("selection matched no rows for the chosen metrics")
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)
    return spec.out_path
