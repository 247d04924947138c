"""Shared helpers for the experiment scripts: dataclass configs from YAML and CSV output."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import yaml


def parse_config(cls, description: str, argv=None):
    """Build ``cls`` from defaults, an optional YAML file and ``--set key=value`` overrides."""
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--config", help="YAML file with fields of the experiment config")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one field (value parsed as YAML)")
    parser.add_argument("--out", help="CSV output path (default: stdout)")
    args = parser.parse_args(argv)
    values = {}
    if args.config:
        values.update(yaml.safe_load(Path(args.config).read_text()) or {})
    for item in args.set:
        key, _, raw = item.partition("=")
        values[key] = yaml.safe_load(raw)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        parser.error(f"unknown config field(s): {', '.join(unknown)}")
    return cls(**values), args.out


def write_rows(rows: list[dict], out: str | None) -> None:
    if not rows:
        return
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if out:
            fh.close()
