#!/usr/bin/env python3
"""Generate a full synthetic dataset for exercising the proxyrank CLI.

Writes per-subject run manifests with trajectory JSONL files, a downstream
score table, a checkpoint series file for the fit command, and the three
corpus-ranking inputs for the datadecide command.
"""

import argparse
from pathlib import Path

from proxyrank.synthetic import (
    build_population,
    write_demo_datadecide,
    write_demo_series,
    write_population,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=Path, help="output directory")
    parser.add_argument("--subjects", type=int, default=12)
    parser.add_argument("--instances", type=int, default=3)
    parser.add_argument("--window", type=int, default=160)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    population = build_population(
        n_subjects=args.subjects, n_instances=args.instances, window=args.window, seed=args.seed
    )
    manifests = write_population(population, args.out / "runs")
    write_demo_series(args.out / "series.csv", seed=args.seed)
    write_demo_datadecide(
        args.out / "dd_proxy.csv",
        args.out / "dd_targets.csv",
        args.out / "dd_compute.csv",
        seed=args.seed,
    )
    print(f"wrote {len(manifests)} manifests under {args.out / 'runs'}")
    print(f"scores: {args.out / 'runs' / 'scores.csv'}")
    print(f"series: {args.out / 'series.csv'}")
    print(f"datadecide inputs: {args.out}/dd_*.csv")


if __name__ == "__main__":
    main()
