"""Command line entry point: render figures from a statistics CSV."""

import argparse
import sys

from .figures import KINDS, FigureSpec, render
from .io import EmptySelectionError, SchemaMismatchError

EXIT_OK = 0
EXIT_DATA = 2
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser():
    parser = _Parser(prog="skt-spde-plots", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render one figure from a stats CSV")
    r.add_argument("csv", help="statistics CSV produced by the simulation CLI")
    r.add_argument("--kind", required=True, choices=sorted(KINDS))
    r.add_argument("--out", required=True, help="output image path")
    r.add_argument("--field", default="l2_sq", help="field for the convergence kind")
    r.add_argument("--dpi", type=int, default=120)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    spec = FigureSpec(input=args.csv, kind=args.kind, out=args.out,
                      conv_field=args.field, dpi=args.dpi)
    try:
        render(spec)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaMismatchError, EmptySelectionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"wrote {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
