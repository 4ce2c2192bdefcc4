"""Command-line surface tying the pipeline together.

Subcommands: metrics, cv, oracle, fit, datadecide, validate.  Every command
is deterministic given (inputs, config, seeds); reruns are byte-identical.
Exit codes: 0 success, 2 invalid input or configuration, 1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import curvefit, ingest, protocols, ranking
from .config import Config, ConfigError, load_config
from .proxylib import (
    ProxyId,
    ProxyVector,
    instance_proxy_vector,
    task_proxy_vector,
    truncate_window,
)
from .tokenstats import ValidationError, build_frequency_table

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID = 2


def _threads_default() -> int:
    env = os.environ.get("PROXYRANK_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _add_common(parser: argparse.ArgumentParser, out_required: bool = True) -> None:
    parser.add_argument("--config", metavar="PATH", default=None, help="JSON config file")
    parser.add_argument("--out", metavar="PATH", required=out_required, help="output file")
    parser.add_argument(
        "--threads",
        metavar="N",
        type=int,
        default=_threads_default(),
        help="worker cap for parallel sweeps (env PROXYRANK_THREADS; output is thread-count independent)",
    )
    parser.add_argument(
        "--seed", metavar="N", type=int, default=0, help="offset added to every configured CV seed"
    )
    parser.add_argument(
        "--permissive", action="store_true", help="collect and report input errors instead of failing fast"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxyrank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metrics", help="aggregate trajectory files into proxy vectors")
    p.add_argument("manifests", nargs="+", metavar="MANIFEST", help="run manifest JSON files")
    _add_common(p)

    p = sub.add_parser("cv", help="leave-k-tasks-out cross-validation of a proxy ranker")
    p.add_argument("--features", required=True, metavar="PATH", help="proxy vectors CSV (from 'metrics')")
    p.add_argument("--scores", required=True, metavar="PATH", help="downstream scores CSV")
    _add_common(p)

    p = sub.add_parser("oracle", help="in-sample selection upper bound on all tasks and subjects")
    p.add_argument("--features", required=True, metavar="PATH")
    p.add_argument("--scores", required=True, metavar="PATH")
    _add_common(p)

    p = sub.add_parser("fit", help="fit and compare the three downstream-accuracy predictors")
    p.add_argument("--series", required=True, metavar="PATH", help="checkpoint series CSV")
    _add_common(p)

    p = sub.add_parser("datadecide", help="corpus-ranking decision curve against compute fraction")
    p.add_argument("--proxy", required=True, metavar="PATH", help="CSV corpus,scale,value")
    p.add_argument("--targets", required=True, metavar="PATH", help="CSV corpus,score")
    p.add_argument("--compute", required=True, metavar="PATH", help="CSV scale,n_params,d_tokens")
    _add_common(p)

    p = sub.add_parser("validate", help="validate an input file against its schema")
    p.add_argument("kind", choices=["trajectories", "scores", "manifest"])
    p.add_argument("path", metavar="PATH")
    _add_common(p, out_required=False)
    return parser


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def cmd_metrics(args: argparse.Namespace, config: Config) -> int:
    signs = config.sign_table()
    manifests = [ingest.read_manifest(p) for p in args.manifests]
    manifests.sort(key=lambda m: m.subject)
    subjects = [m.subject for m in manifests]
    if len(set(subjects)) != len(subjects):
        duplicate = next(s for s in subjects if subjects.count(s) > 1)
        raise ingest.IngestError(f"subject {duplicate!r} appears in more than one manifest")
    vectors: list[ProxyVector] = []
    for manifest in manifests:
        for task in sorted(manifest.files):
            errors: list[ingest.IngestError] = []
            docs = list(
                ingest.read_trajectories(manifest.files[task], permissive=args.permissive, error_sink=errors)
            )
            for error in errors:
                print(f"warning: {error}", file=sys.stderr)
            if not docs:
                raise ingest.IngestError(f"{manifest.files[task]}: no valid trajectory documents")
            by_instance: dict[str, list[ingest.TrajectoryDocument]] = defaultdict(list)
            for doc in docs:
                if doc.task != task:
                    raise ingest.IngestError(
                        f"{manifest.files[task]}: document task {doc.task!r} does not match manifest task {task!r}"
                    )
                by_instance[doc.instance].append(doc)
            windows = {
                (doc.instance, doc.expert): truncate_window(doc.tokens, config.truncate_tokens)
                for group in by_instance.values()
                for doc in group
            }
            freq = build_frequency_table(
                [[r.token_id for r in window] for window in windows.values()]
            )
            instances = []
            incorrect = 0
            for instance_id in sorted(by_instance):
                group = sorted(by_instance[instance_id], key=lambda d: d.expert)
                incorrect += sum(1 for d in group if d.answer_correct is False)
                instances.append(
                    [
                        instance_proxy_vector(
                            windows[(doc.instance, doc.expert)],
                            freq,
                            signs,
                            subject=manifest.subject,
                            task=task,
                        )
                        for doc in group
                    ]
                )
            vector = task_proxy_vector(instances)
            vectors.append(vector)
            undefined = sum(vector.undefined_counts.values())
            print(
                f"{manifest.subject}/{task}: {vector.n_instances} instances, "
                f"{vector.n_trajectories} trajectories ({incorrect} flagged incorrect), "
                f"{undefined} undefined entry contributions",
                file=sys.stderr,
            )
    ingest.write_proxy_vectors(vectors, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# cv / oracle
# ---------------------------------------------------------------------------


def cmd_cv(args: argparse.Namespace, config: Config) -> int:
    features = ingest.read_proxy_vectors(args.features)
    scores = ingest.read_scores(args.scores)
    seeds = tuple(s + args.seed for s in config.cv.seeds)
    report = protocols.run_cv(
        features,
        scores,
        k=config.cv.k,
        fraction=config.cv.fraction,
        seeds=seeds,
        ranker_spec=config.ranker_spec(),
        threads=args.threads,
    )
    ingest.write_report(report, args.out)
    mean, std = report.overall_mean_std()
    print(f"mean rho {mean:.4f} +/- {std:.4f} over {len(seeds)} seeds", file=sys.stderr)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace, config: Config) -> int:
    features = ingest.read_proxy_vectors(args.features)
    scores = ingest.read_scores(args.scores)
    ranker, per_task = protocols.oracle_select(
        features, scores, config.ranker_spec(), threads=args.threads
    )
    text = ingest.render_oracle_report(per_task, ranker.describe())
    Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _read_series_file(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict[ProxyId, np.ndarray]]:
    """Wide checkpoint CSV: step,accuracy,ce_loss,<proxy id>...; step ascending."""
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or header[:3] != ["step", "accuracy", "ce_loss"] or len(header) < 4:
            raise ingest.IngestError(
                f"{path}: expected header 'step,accuracy,ce_loss,<proxy_id>[,...]', got {header!r}"
            )
        proxy_ids = [ProxyId.parse(name) for name in header[3:]]
        rows = []
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ingest.IngestError(f"{path}: expected {len(header)} columns (row {row_number})")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ingest.IngestError(f"{path}: non-numeric value (row {row_number})") from None
    if not rows:
        raise ingest.IngestError(f"{path}: no checkpoint rows")
    data = np.asarray(rows)
    steps = data[:, 0]
    if not (np.diff(steps) > 0).all():
        raise ingest.IngestError(f"{path}: steps must be strictly increasing")
    proxies = {pid: data[:, 3 + i] for i, pid in enumerate(proxy_ids)}
    return steps, data[:, 1], data[:, 2], proxies


def cmd_fit(args: argparse.Namespace, config: Config) -> int:
    steps, accuracy, ce_loss, proxies = _read_series_file(args.series)
    if config.fit.train_max_step is not None:
        n_train = int((steps <= config.fit.train_max_step).sum())
    else:
        n_train = len(steps) - 1
    if n_train < curvefit.POWER_LAW_MIN_POINTS:
        raise ValidationError("series", f"need >= {curvefit.POWER_LAW_MIN_POINTS} training checkpoints, got {n_train}")
    if n_train >= len(steps):
        raise ValidationError("series", "no held-out checkpoints beyond the training window")
    train_accuracy = accuracy[:n_train]
    holdout_accuracy = accuracy[n_train:]
    train_range = float(train_accuracy.max() - train_accuracy.min())
    rows: list[ingest.FitReportRow] = []

    def evaluate(name: str, selected: str, fit: curvefit.FitResult, x_holdout: np.ndarray) -> None:
        holdout = curvefit.Series(x_holdout, holdout_accuracy)
        rmse = curvefit.extrapolation_error(fit, holdout, "rmse")
        nmae = (
            curvefit.extrapolation_error(fit, holdout, "nmae", train_range)
            if train_range > 0
            else float("nan")
        )
        rows.append(
            ingest.FitReportRow(
                predictor=name,
                selected=selected,
                fit=fit,
                r2_train=fit.r_squared,
                nmae_holdout=nmae,
                rmse_holdout=rmse,
            )
        )

    # Proxy predictor: accuracy as a power law in the proxy value, proxy
    # chosen by the inner split over the training window.  Candidates whose
    # training values are not strictly positive cannot enter a power law.
    candidates = {
        pid: curvefit.Series(values[:n_train], train_accuracy)
        for pid, values in proxies.items()
        if (values > 0).all()
    }
    if not candidates:
        raise ValidationError("series", "no proxy column has strictly positive training values")
    selected_pid, proxy_fit = curvefit.inner_split_select(candidates, config.fit.split_fraction)
    evaluate("proxy", str(selected_pid), proxy_fit, proxies[selected_pid][n_train:])

    ce_fit = curvefit.fit_exponential(curvefit.Series(ce_loss[:n_train], train_accuracy))
    evaluate("ce_loss", "ce_loss", ce_fit, ce_loss[n_train:])

    log_steps = np.log10(steps)
    compute_fit = curvefit.fit_sigmoid(
        curvefit.Series(log_steps[:n_train], train_accuracy, x_kind="log10_steps", y_kind="accuracy")
    )
    evaluate("compute", "log10_steps", compute_fit, log_steps[n_train:])

    ingest.write_report(rows, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# datadecide
# ---------------------------------------------------------------------------


def _read_csv_rows(path: str, header: list[str]) -> list[list[str]]:
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        first = next(reader, None)
        if first != header:
            raise ingest.IngestError(f"{path}: expected header {','.join(header)!r}, got {first!r}")
        rows = []
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ingest.IngestError(f"{path}: expected {len(header)} columns (row {row_number})")
            rows.append(row)
        return rows


def cmd_datadecide(args: argparse.Namespace, config: Config) -> int:
    del config
    proxy_values: dict[tuple[str, str], float] = {}
    for corpus, scale, value in _read_csv_rows(args.proxy, ["corpus", "scale", "value"]):
        key = (corpus, scale)
        if key in proxy_values:
            raise ingest.IngestError(f"{args.proxy}: duplicate (corpus, scale) = {key}")
        proxy_values[key] = float(value)
    targets: dict[str, float] = {}
    for corpus, score in _read_csv_rows(args.targets, ["corpus", "score"]):
        if corpus in targets:
            raise ingest.IngestError(f"{args.targets}: duplicate corpus {corpus!r}")
        targets[corpus] = float(score)
    raw_compute: dict[str, tuple[float, float]] = {}
    for scale, n_params, d_tokens in _read_csv_rows(args.compute, ["scale", "n_params", "d_tokens"]):
        if scale in raw_compute:
            raise ingest.IngestError(f"{args.compute}: duplicate scale {scale!r}")
        raw_compute[scale] = (float(n_params), float(d_tokens))
    if "target" not in raw_compute:
        raise ingest.IngestError(f"{args.compute}: needs a row with scale 'target' for the reference run")
    target_n, target_d = raw_compute.pop("target")
    target_flops = 6.0 * target_n * target_d
    compute = {
        scale: protocols.ComputePoint(n_params=n, d_tokens=d, target_flops=target_flops)
        for scale, (n, d) in raw_compute.items()
    }
    points = protocols.corpus_decision_curve(proxy_values, targets, compute)
    ingest.write_report(points, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def cmd_validate(args: argparse.Namespace, config: Config) -> int:
    del config
    if args.kind == "trajectories":
        errors: list[ingest.IngestError] = []
        count = 0
        if args.permissive:
            for _ in ingest.read_trajectories(args.path, permissive=True, error_sink=errors):
                count += 1
            for error in errors:
                print(str(error), file=sys.stderr)
            if errors:
                print(f"{args.path}: {count} valid documents, {len(errors)} invalid lines", file=sys.stderr)
                return EXIT_INVALID
        else:
            for _ in ingest.read_trajectories(args.path):
                count += 1
        print(f"OK: {count} documents")
    elif args.kind == "scores":
        table = ingest.read_scores(args.path)
        print(f"OK: {len(table.scores)} entries")
    else:
        manifest = ingest.read_manifest(args.path)
        print(f"OK: subject {manifest.subject}, {len(manifest.files)} task files")
    return EXIT_OK


COMMANDS = {
    "metrics": cmd_metrics,
    "cv": cmd_cv,
    "oracle": cmd_oracle,
    "fit": cmd_fit,
    "datadecide": cmd_datadecide,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return COMMANDS[args.command](args, config)
    except (
        ingest.IngestError,
        ConfigError,
        ValidationError,
        protocols.ProtocolError,
        curvefit.FitError,
        ranking.UndefinedCorrelation,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # pragma: no cover - internal failure path
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
