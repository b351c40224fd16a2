"""Render figures from a run or evaluation directory."""

from __future__ import annotations

import argparse
import sys

from .readers import SchemaError
from .render import FIGURE_KINDS, render_all


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="pgdpo-plots", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render all figures a directory supports")
    r.add_argument("--run", required=True)
    r.add_argument("--out", default=None)
    r.add_argument("--only", choices=FIGURE_KINDS, default=None)
    args = p.parse_args(argv)
    try:
        produced = render_all(args.run, out_dir=args.out, only=args.only)
    except SchemaError as exc:
        print(f"error: {exc.path}: schema mismatch", file=sys.stderr)
        return 1
    print(f"rendered {len(produced)} figures")
    return 0


if __name__ == "__main__":
    sys.exit(main())
