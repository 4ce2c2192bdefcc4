"""File formats: trajectory JSONL, score/report CSV, run manifests.

Trajectory files are JSON Lines, one document per line, with token records
stored as compact distribution summaries (id/lp/rank/maxp/ent plus optional
elp).  Data files serialize floats as shortest round-trip decimals so a
write/read cycle is lossless; report files print 6 significant digits.  All
text is UTF-8 with LF line endings and writers are deterministic, so
rewriting the same content is byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .curvefit import FitResult
from .proxylib import PROXY_IDS, ProxyId, ProxyVector
from .protocols import CurvePoint, CvReport
from .ranking import ScoreTable
from .tokenstats import TokenRecord, ValidationError

SCORES_HEADER = ["subject", "task", "score"]
PROXY_VECTORS_HEADER = ["subject", "task", "proxy_id", "value", "n_undefined"]


class IngestError(ValueError):
    """Invalid input file content, with location context in the message."""


@dataclass(frozen=True)
class TrajectoryDocument:
    """One expert trajectory teacher-forced through one candidate model.

    ``answer_correct`` flags trajectories whose final answer was wrong; they
    are kept (never filtered) and the flag is surfaced in summaries.
    """

    task: str
    instance: str
    expert: str
    answer_correct: bool | None
    tokens: tuple[TokenRecord, ...]

    def validate(self) -> None:
        if not self.tokens:
            raise ValidationError("tokens", "document has no tokens")
        for i, token in enumerate(self.tokens):
            try:
                token.validate()
            except ValidationError as exc:
                raise ValidationError(exc.field, f"token {i}: {exc}") from exc


def _require(obj: dict, key: str, line: int) -> object:
    if key not in obj:
        raise IngestError(f"missing field {key!r} (line {line})")
    return obj[key]


def _parse_token(obj: object, index: int, line: int) -> TokenRecord:
    if not isinstance(obj, dict):
        raise IngestError(f"token {index} is not an object (line {line})")
    for key in ("id", "lp", "rank", "maxp", "ent"):
        if key not in obj:
            raise IngestError(f"token {index}: missing field {key!r} (line {line})")
    try:
        record = TokenRecord(
            token_id=_as_int(obj["id"], "id", line),
            expert_logprob=_as_float(obj["lp"], "lp", line),
            rank=_as_int(obj["rank"], "rank", line),
            max_prob=_as_float(obj["maxp"], "maxp", line),
            entropy_norm=_as_float(obj["ent"], "ent", line),
            expert_model_logprob=(
                _as_float(obj["elp"], "elp", line) if obj.get("elp") is not None else None
            ),
        )
        record.validate()
    except ValidationError as exc:
        raise IngestError(f"token {index}: {exc} (line {line})") from exc
    return record


def _as_int(value: object, key: str, line: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise IngestError(f"field {key!r} must be an integer, got {value!r} (line {line})")
    return value


def _as_float(value: object, key: str, line: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise IngestError(f"field {key!r} must be a number, got {value!r} (line {line})")
    return float(value)


def parse_trajectory_line(text: str, line: int) -> TrajectoryDocument:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IngestError(f"malformed JSON: {exc.msg} (line {line})") from exc
    if not isinstance(obj, dict):
        raise IngestError(f"document is not a JSON object (line {line})")
    task = _require(obj, "task", line)
    instance = _require(obj, "instance", line)
    expert = _require(obj, "expert", line)
    answer_correct = _require(obj, "answer_correct", line)
    tokens = _require(obj, "tokens", line)
    if not isinstance(task, str) or not isinstance(instance, str) or not isinstance(expert, str):
        raise IngestError(f"task/instance/expert must be strings (line {line})")
    if answer_correct is not None and not isinstance(answer_correct, bool):
        raise IngestError(f"field 'answer_correct' must be a boolean or null (line {line})")
    if not isinstance(tokens, list) or not tokens:
        raise IngestError(f"field 'tokens' must be a non-empty array (line {line})")
    records = tuple(_parse_token(t, i, line) for i, t in enumerate(tokens))
    return TrajectoryDocument(
        task=task, instance=instance, expert=expert, answer_correct=answer_correct, tokens=records
    )


def read_trajectories(
    path: str | Path, permissive: bool = False, error_sink: list[IngestError] | None = None
) -> Iterator[TrajectoryDocument]:
    """Stream validated documents from a JSONL file in file order.

    Fail-fast by default; in permissive mode invalid lines are skipped and
    their errors collected into ``error_sink`` (when given).  Unknown keys at
    the document level are ignored for forward compatibility.
    """
    with open(path, encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                yield parse_trajectory_line(raw, line_number)
            except IngestError as exc:
                wrapped = IngestError(f"{path}: {exc}")
                if not permissive:
                    raise wrapped from exc
                if error_sink is not None:
                    error_sink.append(wrapped)


def document_to_line(doc: TrajectoryDocument) -> str:
    tokens = []
    for record in doc.tokens:
        token: dict[str, object] = {
            "id": record.token_id,
            "lp": record.expert_logprob,
            "rank": record.rank,
            "maxp": record.max_prob,
            "ent": record.entropy_norm,
        }
        if record.expert_model_logprob is not None:
            token["elp"] = record.expert_model_logprob
        tokens.append(token)
    obj = {
        "task": doc.task,
        "instance": doc.instance,
        "expert": doc.expert,
        "answer_correct": doc.answer_correct,
        "tokens": tokens,
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_trajectories(docs: Iterable[TrajectoryDocument], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for doc in docs:
            doc.validate()
            handle.write(document_to_line(doc))
            handle.write("\n")


# ---------------------------------------------------------------------------
# Score tables
# ---------------------------------------------------------------------------


def read_scores(path: str | Path, kind: str = "model") -> ScoreTable:
    """Read a ``subject,task,score`` CSV into a score table."""
    scores: dict[tuple[str, str], float] = {}
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != SCORES_HEADER:
            raise IngestError(f"{path}: expected header {','.join(SCORES_HEADER)!r}, got {header!r}")
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise IngestError(f"{path}: expected 3 columns (row {row_number})")
            subject, task, score_text = row
            try:
                score = float(score_text)
            except ValueError:
                raise IngestError(f"{path}: non-numeric score {score_text!r} (row {row_number})") from None
            if not math.isfinite(score):
                raise IngestError(f"{path}: score must be finite, got {score_text!r} (row {row_number})")
            if (subject, task) in scores:
                raise IngestError(f"{path}: duplicate (subject, task) = ({subject}, {task}) (row {row_number})")
            scores[(subject, task)] = score
    if not scores:
        warnings.warn(f"{path}: score file is empty", stacklevel=2)
    return ScoreTable(scores=scores, kind=kind)


def write_scores(table: ScoreTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(",".join(SCORES_HEADER) + "\n")
        for (subject, task), score in sorted(table.scores.items()):
            handle.write(f"{subject},{task},{score!r}\n")


# ---------------------------------------------------------------------------
# Run manifests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """Pointers from one subject (model/corpus/checkpoint) to its trajectory files."""

    subject: str
    kind: str
    files: dict[str, Path]
    n_params: float | None = None
    d_tokens: float | None = None
    step: int | None = None


def read_manifest(path: str | Path) -> RunManifest:
    """Load a manifest; trajectory paths resolve relative to the manifest file."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: malformed JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise IngestError(f"{path}: manifest must be a JSON object")
    for key in ("subject", "kind", "files"):
        if key not in obj:
            raise IngestError(f"{path}: missing manifest key {key!r}")
    files_obj = obj["files"]
    if not isinstance(files_obj, dict) or not files_obj:
        raise IngestError(f"{path}: 'files' must be a non-empty map of task -> path")
    files: dict[str, Path] = {}
    for task, rel in sorted(files_obj.items()):
        resolved = (path.parent / rel).resolve()
        if not resolved.is_file():
            raise IngestError(f"{path}: trajectory file for task {task!r} does not exist: {resolved}")
        files[task] = resolved

    def _opt_number(key: str) -> float | None:
        value = obj.get(key)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise IngestError(f"{path}: manifest key {key!r} must be a number or null")
        return float(value)

    step = obj.get("step")
    if step is not None and (isinstance(step, bool) or not isinstance(step, int)):
        raise IngestError(f"{path}: manifest key 'step' must be an integer or null")
    return RunManifest(
        subject=str(obj["subject"]),
        kind=str(obj["kind"]),
        files=files,
        n_params=_opt_number("n_params"),
        d_tokens=_opt_number("d_tokens"),
        step=step,
    )


def write_manifest(manifest: RunManifest, path: str | Path, relative_to: Path | None = None) -> None:
    path = Path(path)
    base = relative_to if relative_to is not None else path.parent
    obj = {
        "subject": manifest.subject,
        "kind": manifest.kind,
        "n_params": manifest.n_params,
        "d_tokens": manifest.d_tokens,
        "step": manifest.step,
        "files": {task: str(Path(p).relative_to(base)) for task, p in sorted(manifest.files.items())},
    }
    path.write_text(json.dumps(obj, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Proxy vector files
# ---------------------------------------------------------------------------


def write_proxy_vectors(vectors: Sequence[ProxyVector], path: str | Path) -> None:
    """One row per (subject, task, library entry); undefined values are blank."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(",".join(PROXY_VECTORS_HEADER) + "\n")
        for vector in vectors:
            for pid in PROXY_IDS:
                value = vector.values.get(pid)
                text = "" if value is None else repr(value)
                undefined = vector.undefined_counts.get(pid, 0)
                handle.write(f"{vector.subject},{vector.task},{pid},{text},{undefined}\n")


def read_proxy_vectors(path: str | Path) -> dict[tuple[str, str], ProxyVector]:
    vectors: dict[tuple[str, str], dict] = {}
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != PROXY_VECTORS_HEADER:
            raise IngestError(f"{path}: expected header {','.join(PROXY_VECTORS_HEADER)!r}, got {header!r}")
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise IngestError(f"{path}: expected 5 columns (row {row_number})")
            subject, task, pid_text, value_text, undefined_text = row
            try:
                pid = ProxyId.parse(pid_text)
            except ValueError as exc:
                raise IngestError(f"{path}: {exc} (row {row_number})") from exc
            entry = vectors.setdefault((subject, task), {"values": {}, "undefined": {}})
            if value_text != "":
                try:
                    entry["values"][pid] = float(value_text)
                except ValueError:
                    raise IngestError(f"{path}: non-numeric value {value_text!r} (row {row_number})") from None
            try:
                undefined = int(undefined_text)
            except ValueError:
                raise IngestError(f"{path}: non-integer count {undefined_text!r} (row {row_number})") from None
            if undefined:
                entry["undefined"][pid] = undefined
    return {
        (subject, task): ProxyVector(
            subject=subject,
            task=task,
            values=entry["values"],
            undefined_counts=entry["undefined"],
        )
        for (subject, task), entry in vectors.items()
    }


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return f"{value:.6g}"


def render_cv_report(report: CvReport) -> str:
    """Long-format rows plus '#'-prefixed aggregate and selection blocks."""
    out = io.StringIO()
    out.write("fold,seed,task,rho\n")
    for r in report.records:
        out.write(f"{r.fold},{r.seed},{r.task},{_fmt(r.rho)}\n")
    for (fold, seed), description in sorted(report.ranker_descriptions().items()):
        out.write(f"# selection,{fold},{seed},{description}\n")
    for task, (mean_abs, count) in report.per_task_mean_abs_rho().items():
        out.write(f"# task_mean_abs_rho,{task},{_fmt(mean_abs)},{count}\n")
    mean, std = report.overall_mean_std()
    out.write(f"# overall,mean_rho,{_fmt(mean)}\n")
    out.write(f"# overall,std_rho,{_fmt(std)}\n")
    out.write(f"# overall,flagged_undefined,{report.flagged()}\n")
    for pid, (count, frequency) in report.selection_frequencies().items():
        out.write(f"# selection_frequency,{pid},{count},{_fmt(frequency)}\n")
    out.write(f"# config,k={report.k},fraction={_fmt(report.fraction)},variant={report.variant}\n")
    out.write(f"# prng,{report.prng}\n")
    return out.getvalue()


def render_decision_curve(points: Sequence[CurvePoint]) -> str:
    out = io.StringIO()
    out.write("scale,compute_fraction,decision_accuracy\n")
    for point in points:
        out.write(f"{point.scale},{_fmt(point.compute_fraction)},{_fmt(point.decision_accuracy)}\n")
    return out.getvalue()


@dataclass(frozen=True)
class FitReportRow:
    """One predictor family's fit and holdout errors for the comparison table."""

    predictor: str
    selected: str
    fit: FitResult
    r2_train: float
    nmae_holdout: float
    rmse_holdout: float


def render_fit_report(rows: Sequence[FitReportRow]) -> str:
    out = io.StringIO()
    out.write("predictor,selected,family,params,r2_train,nmae_holdout,rmse_holdout,degenerate\n")
    for row in rows:
        params = ";".join(f"{name}={_fmt(value)}" for name, value in row.fit.params.items())
        out.write(
            f"{row.predictor},{row.selected},{row.fit.family},{params},"
            f"{_fmt(row.r2_train)},{_fmt(row.nmae_holdout)},{_fmt(row.rmse_holdout)},"
            f"{int(row.fit.degenerate)}\n"
        )
    return out.getvalue()


def render_oracle_report(per_task: Mapping[str, float], description: str) -> str:
    out = io.StringIO()
    out.write("task,rho\n")
    for task in sorted(per_task):
        out.write(f"{task},{_fmt(per_task[task])}\n")
    out.write(f"# selection,{description}\n")
    out.write("# note,in-sample upper bound: selected and evaluated on the same tasks and subjects\n")
    return out.getvalue()


def write_report(report: object, path: str | Path) -> None:
    """Serialize a known report object to CSV with a deterministic layout."""
    if isinstance(report, CvReport):
        text = render_cv_report(report)
    elif isinstance(report, (list, tuple)) and report and isinstance(report[0], CurvePoint):
        text = render_decision_curve(report)
    elif isinstance(report, (list, tuple)) and report and isinstance(report[0], FitReportRow):
        text = render_fit_report(report)
    else:
        raise TypeError(f"no report writer for {type(report).__name__}")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)
