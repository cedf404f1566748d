#!/usr/bin/env python3
"""Run the two-species benchmark ensemble and print the headline estimators."""
import argparse
import json

from skt_spde.studies import benchmark_estimates


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    result = benchmark_estimates(paths=args.paths, seed=args.seed, workers=args.workers)
    print(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
