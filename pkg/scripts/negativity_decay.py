#!/usr/bin/env python3
"""Negative-part energy of the truncated system under time-step halving."""
import argparse
import json

from skt_spde.studies import negativity_decay


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=4000)
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args()
    result = negativity_decay(paths=args.paths, seed=args.seed)
    print(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
