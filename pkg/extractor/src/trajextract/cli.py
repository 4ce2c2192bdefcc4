"""Command line: run one extraction job file, write one trajectory file."""

from __future__ import annotations

import argparse
import sys

from .extract import extract
from .jobs import ExtractionJob, JobError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="trajextract", description=__doc__)
    parser.add_argument("job", help="extraction job JSON file")
    parser.add_argument("--out", required=True, metavar="PATH", help="output trajectory JSONL file")
    args = parser.parse_args(argv)
    try:
        job = ExtractionJob.from_file(args.job)
        count = extract(job, args.out)
    except (JobError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - internal failure path
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} trajectories to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
