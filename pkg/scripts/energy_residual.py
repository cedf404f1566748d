#!/usr/bin/env python3
"""Discrete energy-identity residual: deterministic order and noise balance."""
import argparse
import json

from skt_spde.studies import energy_residual


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    result = energy_residual(paths=args.paths, seed=args.seed, workers=args.workers)
    print(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
