"""Extraction job description and its JSON file format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

TEMPLATES = ("plain", "cot", "chat")

# Lead-in appended after the problem statement for base (non-chat)
# checkpoints, so the trajectory continues a reasoning context.
COT_LEAD_IN = "Let's think how to answer this question step by step."


class JobError(ValueError):
    """Invalid extraction job file or fields."""


@dataclass(frozen=True)
class ExtractionItem:
    task: str
    instance: str
    expert: str
    prompt: str
    trajectory: str
    answer_correct: bool | None = None


@dataclass
class ExtractionJob:
    """Everything needed to produce one trajectory file.

    ``model`` is a local path or hub identifier; ``expert_model`` optionally
    names a second model (sharing the candidate's vocabulary) whose token
    logprobs are recorded as ``elp``.
    """

    model: str
    items: list[ExtractionItem]
    prompt_template: str = "cot"
    truncation: int = 1000
    batch_size: int = 4
    expert_model: str | None = None

    def validate(self) -> None:
        if self.prompt_template not in TEMPLATES:
            raise JobError(f"prompt_template must be one of {TEMPLATES}, got {self.prompt_template!r}")
        if self.truncation < 1:
            raise JobError(f"truncation must be >= 1, got {self.truncation}")
        if self.batch_size < 1:
            raise JobError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.items:
            raise JobError("job has no items")
        for i, item in enumerate(self.items):
            if not item.trajectory:
                raise JobError(f"item {i} ({item.task}/{item.instance}): trajectory text is empty")

    @classmethod
    def from_file(cls, path: str | Path) -> "ExtractionJob":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise JobError(f"{path}: malformed JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise JobError(f"{path}: job must be a JSON object")
        known = {"model", "items", "prompt_template", "truncation", "batch_size", "expert_model"}
        unknown = set(obj) - known
        if unknown:
            raise JobError(f"{path}: unknown job key(s): {sorted(unknown)}")
        if "model" not in obj or "items" not in obj:
            raise JobError(f"{path}: job needs 'model' and 'items'")
        items = []
        for i, raw in enumerate(obj["items"]):
            if not isinstance(raw, dict):
                raise JobError(f"{path}: item {i} is not an object")
            for key in ("task", "instance", "expert", "prompt", "trajectory"):
                if key not in raw:
                    raise JobError(f"{path}: item {i} missing {key!r}")
            items.append(
                ExtractionItem(
                    task=str(raw["task"]),
                    instance=str(raw["instance"]),
                    expert=str(raw["expert"]),
                    prompt=str(raw["prompt"]),
                    trajectory=str(raw["trajectory"]),
                    answer_correct=raw.get("answer_correct"),
                )
            )
        job = cls(
            model=str(obj["model"]),
            items=items,
            prompt_template=str(obj.get("prompt_template", "cot")),
            truncation=int(obj.get("truncation", 1000)),
            batch_size=int(obj.get("batch_size", 4)),
            expert_model=obj.get("expert_model"),
        )
        job.validate()
        return job
