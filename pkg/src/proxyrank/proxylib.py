"""Aggregation of per-token statistics into the 80-entry proxy library.

Each library entry pairs one weighting scheme with one core metric.  An
instance-level entry is the signed, weight-normalized average of the core
metric over a trajectory window; the task-level vector averages experts
within each instance first and then instances.  Entries whose weight mass is
exactly zero over a window are undefined and are excluded (never imputed)
from the task average, with counts kept for reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .tokenstats import (
    CORE_METRICS,
    WEIGHTINGS,
    FrequencyTable,
    TokenRecord,
    core_metrics,
    loss_stats,
    weight_vector,
)

DEFAULT_TRUNCATE_TOKENS = 1000


@dataclass(frozen=True)
class ProxyId:
    """One (weighting, core metric) pair; canonical form ``weighting/core``.

    Canonical ordering is library index order (see PROXY_INDEX), not
    alphabetical.
    """

    weighting: str
    core: str

    def __post_init__(self) -> None:
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"unknown weighting scheme {self.weighting!r}")
        if self.core not in CORE_METRICS:
            raise ValueError(f"unknown core metric {self.core!r}")

    def __str__(self) -> str:
        return f"{self.weighting}/{self.core}"

    @classmethod
    def parse(cls, text: str) -> "ProxyId":
        weighting, sep, core = text.partition("/")
        if not sep:
            raise ValueError(f"proxy id {text!r} is not of the form 'weighting/core'")
        return cls(weighting, core)


# Canonical library order: weighting-major, core-minor.  Index arithmetic all
# over the ranking code relies on this layout.
PROXY_IDS: tuple[ProxyId, ...] = tuple(
    ProxyId(weighting, core) for weighting in WEIGHTINGS for core in CORE_METRICS
)
PROXY_INDEX: dict[ProxyId, int] = {pid: i for i, pid in enumerate(PROXY_IDS)}
LIBRARY_SIZE = len(PROXY_IDS)

# Orientation so that, all else equal, larger entries indicate a better
# model: agreement metrics are positive, error/uncertainty metrics negative.
DEFAULT_SIGNS: dict[str, int] = {
    "ce_loss": -1,
    "top_1_accuracy": 1,
    "top_2_accuracy": 1,
    "top_3_accuracy": 1,
    "top_5_accuracy": 1,
    "entropy": -1,
    "rank": -1,
    "reciprocal_rank": 1,
    "margin": -1,
    "wrong_confidence": -1,
}


@dataclass(frozen=True)
class SignTable:
    """Per-core-metric orientation sign (+1 or -1)."""

    signs: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_SIGNS))

    def __post_init__(self) -> None:
        if set(self.signs) != set(CORE_METRICS):
            missing = set(CORE_METRICS) - set(self.signs)
            extra = set(self.signs) - set(CORE_METRICS)
            raise ValueError(f"sign table must cover exactly the core metrics (missing={missing}, extra={extra})")
        for name, sign in self.signs.items():
            if sign not in (-1, 1):
                raise ValueError(f"sign for {name!r} must be +1 or -1, got {sign!r}")

    @classmethod
    def with_overrides(cls, overrides: Mapping[str, int] | None = None) -> "SignTable":
        signs = dict(DEFAULT_SIGNS)
        signs.update(overrides or {})
        return cls(signs)

    def sign(self, core: str) -> int:
        return self.signs[core]


@dataclass(frozen=True)
class ProxyVector:
    """Proxy-library values for one (subject, task) pair.

    ``values`` holds the defined entries only; ``undefined_counts`` records,
    per entry, how many contributing windows had zero weight mass for it.
    """

    subject: str
    task: str
    values: dict[ProxyId, float]
    undefined_counts: dict[ProxyId, int] = field(default_factory=dict)
    n_instances: int = 1
    n_trajectories: int = 1

    def get(self, pid: ProxyId) -> float | None:
        return self.values.get(pid)


def truncate_window(trajectory: Sequence[TokenRecord], max_tokens: int = DEFAULT_TRUNCATE_TOKENS) -> list[TokenRecord]:
    """Keep the final ``max_tokens`` records of a trajectory, in order."""
    if not trajectory:
        raise ValueError("cannot truncate an empty trajectory")
    if max_tokens < 1:
        raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")
    return list(trajectory[-max_tokens:])


def instance_proxy_vector(
    window: Sequence[TokenRecord],
    freq: FrequencyTable,
    signs: SignTable | None = None,
    subject: str = "",
    task: str = "",
) -> ProxyVector:
    """Aggregate one trajectory window into an 80-entry proxy vector.

    Entry (w, c) is ``sign(c) * sum_t m_c,t * w_w,t / sum_t w_w,t``.  The
    Gaussian-loss weighting is centered on this window's own loss statistics.
    Entries with zero total weight are left undefined.
    """
    if not window:
        raise ValueError("instance_proxy_vector requires a non-empty window")
    signs = signs or SignTable()
    stats = loss_stats(window)
    metric_rows = [core_metrics(r).as_tuple() for r in window]
    weight_rows = [weight_vector(r, freq, stats).as_tuple() for r in window]

    values: dict[ProxyId, float] = {}
    undefined: dict[ProxyId, int] = {}
    for wi, weighting in enumerate(WEIGHTINGS):
        weight_sum = 0.0
        weighted = [0.0] * len(CORE_METRICS)
        for metrics, weights in zip(metric_rows, weight_rows):
            w = weights[wi]
            weight_sum += w
            for ci in range(len(CORE_METRICS)):
                weighted[ci] += metrics[ci] * w
        for ci, core in enumerate(CORE_METRICS):
            pid = ProxyId(weighting, core)
            if weight_sum > 0.0:
                values[pid] = signs.sign(core) * weighted[ci] / weight_sum
            else:
                undefined[pid] = 1
    return ProxyVector(
        subject=subject,
        task=task,
        values=values,
        undefined_counts=undefined,
        n_instances=1,
        n_trajectories=1,
    )


def task_proxy_vector(instances: Sequence[Sequence[ProxyVector]]) -> ProxyVector:
    """Average instance vectors into one task-level vector.

    Experts are averaged within each instance first, then instances are
    averaged with equal weight; this keeps instances with unequal expert
    coverage on an equal footing.  Entries undefined in every expert of an
    instance are skipped for that instance; entries undefined everywhere stay
    undefined, with drop counts accumulated.
    """
    if not instances:
        raise ValueError("task_proxy_vector requires at least one instance")
    subject = instances[0][0].subject
    task = instances[0][0].task
    sums: dict[ProxyId, float] = {}
    counts: dict[ProxyId, int] = {}
    undefined: dict[ProxyId, int] = {}
    n_trajectories = 0
    for group in instances:
        if not group:
            raise ValueError("each instance needs at least one expert vector")
        n_trajectories += len(group)
        for pid in PROXY_IDS:
            expert_values = [v.values[pid] for v in group if pid in v.values]
            dropped = sum(v.undefined_counts.get(pid, 0) for v in group)
            if dropped:
                undefined[pid] = undefined.get(pid, 0) + dropped
            if expert_values:
                instance_value = sum(expert_values) / len(expert_values)
                sums[pid] = sums.get(pid, 0.0) + instance_value
                counts[pid] = counts.get(pid, 0) + 1
    values = {pid: sums[pid] / counts[pid] for pid in sums}
    return ProxyVector(
        subject=subject,
        task=task,
        values=values,
        undefined_counts=undefined,
        n_instances=len(instances),
        n_trajectories=n_trajectories,
    )


def baseline_generic_ce(records: Iterable[TokenRecord]) -> float:
    """Plain mean CE loss over a generic-text token stream (no weighting)."""
    total = 0.0
    count = 0
    for record in records:
        total += -record.expert_logprob
        count += 1
    if count == 0:
        raise ValueError("baseline_generic_ce requires a non-empty stream")
    return total / count


def baseline_rbridge(window: Sequence[TokenRecord]) -> float:
    """Expert-likelihood-weighted CE loss over a trajectory window.

    Each position's CE loss is weighted by the expert model's own probability
    of the token, so every record must carry ``expert_model_logprob``.
    """
    if not window:
        raise ValueError("baseline_rbridge requires a non-empty window")
    num = 0.0
    den = 0.0
    for i, record in enumerate(window):
        if record.expert_model_logprob is None:
            raise ValueError(
                f"record {i} lacks expert_model_logprob; this baseline requires expert-model logprobs"
            )
        w = math.exp(record.expert_model_logprob)
        num += w * -record.expert_logprob
        den += w
    if den == 0.0:
        raise ValueError("all expert-model probabilities are zero; weighted CE undefined")
    return num / den
