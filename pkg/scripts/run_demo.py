#!/usr/bin/env python3
"""End-to-end demo: synthetic data -> proxy vectors -> CV / oracle / fit / curve.

Every step shells through the CLI entry points, so this doubles as a smoke
test of the command surface.  Outputs land under the given directory.
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path


def run(argv: list[str]) -> None:
    print(f"$ {' '.join(argv)}")
    subprocess.run(argv, check=True)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=Path, help="working directory")
    parser.add_argument("--subjects", type=int, default=12)
    args = parser.parse_args()
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    run([sys.executable, str(Path(__file__).parent / "make_synthetic.py"), str(out),
         "--subjects", str(args.subjects)])

    config = out / "config.json"
    config.write_text(
        json.dumps({"cv": {"k": 2, "fraction": 0.6, "seeds": list(range(10)), "ranker": "ranksvm_linear"}}),
        encoding="utf-8",
    )
    manifests = sorted(str(p) for p in (out / "runs").glob("*.json"))

    run(["proxyrank", "metrics", *manifests, "--out", str(out / "features.csv")])
    run(["proxyrank", "cv", "--features", str(out / "features.csv"),
         "--scores", str(out / "runs" / "scores.csv"), "--config", str(config),
         "--out", str(out / "cv_report.csv")])
    run(["proxyrank", "oracle", "--features", str(out / "features.csv"),
         "--scores", str(out / "runs" / "scores.csv"), "--config", str(config),
         "--out", str(out / "oracle_report.csv")])
    run(["proxyrank", "fit", "--series", str(out / "series.csv"),
         "--out", str(out / "fit_report.csv")])
    run(["proxyrank", "datadecide", "--proxy", str(out / "dd_proxy.csv"),
         "--targets", str(out / "dd_targets.csv"), "--compute", str(out / "dd_compute.csv"),
         "--out", str(out / "decision_curve.csv")])

    print("\n--- cv_report.csv (tail) ---")
    print("\n".join(Path(out / "cv_report.csv").read_text(encoding="utf-8").splitlines()[-12:]))
    print("\n--- fit_report.csv ---")
    print(Path(out / "fit_report.csv").read_text(encoding="utf-8"))
    print("--- decision_curve.csv ---")
    print(Path(out / "decision_curve.csv").read_text(encoding="utf-8"))


if __name__ == "__main__":
    main()
