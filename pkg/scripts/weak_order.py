#!/usr/bin/env python3
"""Weak-order bias slope of the explicit scheme on the scalar test equation."""
import argparse
import json

from skt_spde.studies import scalar_moment, weak_order


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=200_000)
    parser.add_argument("--moment-paths", type=int, default=100_000)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    print(json.dumps(scalar_moment(paths=args.moment_paths, workers=args.workers), indent=2))
    print(json.dumps(weak_order(paths=args.paths), indent=2))


if __name__ == "__main__":
    main()
