"""Run every shipped YAML config through the command-line runner."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from isothermic.cli import main as cli_main

COMMANDS = {
    "balance_ball": "balance-check",
    "curvature_ellipse": "curvature",
    "elliptic_ball": "solve-elliptic",
    "heat_ball": "solve-heat",
    "thm42_disk": "thm42",
    "varadhan_disk": "varadhan",
    "varadhan_oracle": "varadhan",
    "wave_ball": "wave-check",
}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--configs", default=str(Path(__file__).resolve().parents[1] / "configs"))
    parser.add_argument("--out", default="out", help="root directory for the outputs")
    parser.add_argument("--only", nargs="*", help="config stems to run (default all)")
    args = parser.parse_args(argv)
    status = 0
    for path in sorted(Path(args.configs).glob("*.yaml")):
        if args.only and path.stem not in args.only:
            continue
        command = COMMANDS.get(path.stem, "rigidity")
        print(f"== {path.stem}: {command}", flush=True)
        code = cli_main([command, "--config", str(path), "--out", str(Path(args.out) / path.stem)])
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
