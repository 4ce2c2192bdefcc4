"""Output records and the JSONL trajectory-file format.

The format matches the proxyrank ingest schema exactly: one JSON object per
line with keys task/instance/expert/answer_correct/tokens, token objects
with id/lp/rank/maxp/ent and optional elp.  Extra document-level keys
(template, truncated) carry extraction metadata; downstream readers ignore
them.  Floats print as shortest round-trip decimals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable


@dataclass(frozen=True)
class TokenSummary:
    """Distribution summary at one trajectory position."""

    token_id: int
    logprob: float
    rank: int
    max_prob: float
    entropy_norm: float
    expert_logprob: float | None = None


@dataclass
class TrajectoryRecord:
    """One (task, instance, expert) trajectory with its extraction metadata."""

    task: str
    instance: str
    expert: str
    answer_correct: bool | None
    tokens: list[TokenSummary]
    template: str = "plain"
    truncated: bool = False

    def to_line(self) -> str:
        tokens = []
        for t in self.tokens:
            obj: dict[str, object] = {
                "id": t.token_id,
                "lp": t.logprob,
                "rank": t.rank,
                "maxp": t.max_prob,
                "ent": t.entropy_norm,
            }
            if t.expert_logprob is not None:
                obj["elp"] = t.expert_logprob
            tokens.append(obj)
        doc = {
            "task": self.task,
            "instance": self.instance,
            "expert": self.expert,
            "answer_correct": self.answer_correct,
            "tokens": tokens,
            "template": self.template,
            "truncated": self.truncated,
        }
        return json.dumps(doc, ensure_ascii=False, separators=(",", ":"))


def write_records(records: Iterable[TrajectoryRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(record.to_line())
            handle.write("\n")
