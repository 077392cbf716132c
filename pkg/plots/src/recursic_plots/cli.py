"""Command-line figure rendering: plot --csv <paths> --spec <json> --out <png>."""

from __future__ import annotations

import argparse
import json
import sys

from .render import FigureSpec, RenderError, render

_SPEC_FIELDS = {"labels", "metrics", "title"}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render BER / relative-throughput figures from sweep CSVs",
    )
    parser.add_argument("--csv", nargs="+", required=True,
                        help="sweep CSV files (fixed harness header)")
    parser.add_argument("--spec", required=True,
                        help="JSON file with labels (detector -> label/style), "
                             "optional metrics list and title")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--overwrite", action="store_true",
                        help="replace the output file if it exists")
    args = parser.parse_args(argv)

    try:
        with open(args.spec, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict) or "labels" not in doc:
            raise RenderError("spec must be a JSON object with a 'labels' map")
        unknown = set(doc) - _SPEC_FIELDS
        if unknown:
            raise RenderError(f"unknown spec fields: {sorted(unknown)}")
        spec = FigureSpec(
            csv_paths=list(args.csv),
            labels=doc["labels"],
            out_path=args.out,
            metrics=tuple(doc.get("metrics", ("ber", "throughput"))),
            title=doc.get("title"),
            overwrite=args.overwrite,
        )
        render(spec)
    except (RenderError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
