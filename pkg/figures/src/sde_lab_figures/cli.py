"""CLI: sde-lab-figures render --spec PATH."""

from __future__ import annotations

import argparse
import sys

import matplotlib.pyplot as plt

from sde_lab_figures.render import load_plot_spec, render
from sde_lab_figures.schema import EmptyCsvError, SchemaError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sde-lab-figures", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    p = sub.add_parser("render", help="render one plot spec to SVG and PNG")
    p.add_argument("--spec", required=True, help="TOML plot spec")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code or 2
    if args.command != "render":
        print("error: missing subcommand 'render'", file=sys.stderr)
        return 2
    try:
        spec = load_plot_spec(args.spec)
        fig, written = render(spec)
        plt.close(fig)
    except EmptyCsvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SchemaError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
