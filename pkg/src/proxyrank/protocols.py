"""Evaluation protocols: leave-k-tasks-out CV, oracle selection, decision curves.

Selection always happens on held-in tasks over a subject subsample; ranking
quality is always evaluated on the full subject set.  Every random choice
flows through one named PRNG with a documented seeding rule so runs are
reproducible bit for bit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .proxylib import ProxyVector
from .ranking import (
    Ranker,
    RankerSpec,
    ScoreTable,
    UndefinedCorrelation,
    fit_ranksvm_linear,
    fit_ranksvm_rbf,
    preference_pairs,
    select_sparse3,
    select_univariate,
    spearman,
)

# Seeding rule for subject subsampling, recorded in every CV report.
PRNG_DESCRIPTION = (
    "NumPy PCG64(seed*1000003+fold_index); subjects sorted lexicographically, "
    "permuted with Generator.permutation, first round-half-up(fraction*n) kept (min 2)"
)


class ProtocolError(RuntimeError):
    """A fit or evaluation failed inside a protocol run (carries fold/seed context)."""


@dataclass(frozen=True)
class FoldSpec:
    """One task split plus the subject subset selection is allowed to see."""

    held_in: tuple[str, ...]
    held_out: tuple[str, ...]
    subjects: tuple[str, ...] = ()
    seed: int | None = None


@dataclass(frozen=True)
class ComputePoint:
    """Training compute of one run under the 6*N*D FLOPs approximation."""

    n_params: float
    d_tokens: float
    target_flops: float

    def __post_init__(self) -> None:
        if self.n_params <= 0 or self.d_tokens <= 0 or self.target_flops <= 0:
            raise ValueError("compute point requires positive parameter, token and target-FLOP counts")

    @property
    def flops(self) -> float:
        return 6.0 * self.n_params * self.d_tokens

    @property
    def fraction(self) -> float:
        return self.flops / self.target_flops


def compute_fraction(n_proxy: float, d_proxy: float, n_target: float, d_target: float) -> float:
    """Proxy-over-target training FLOPs ratio under FLOPs = 6*N*D."""
    if min(n_proxy, d_proxy, n_target, d_target) <= 0:
        raise ValueError("compute_fraction requires positive counts")
    return (n_proxy * d_proxy) / (n_target * d_target)


def make_folds(tasks: Iterable[str], k: int) -> list[FoldSpec]:
    """All C(n, k) leave-k-tasks-out splits in canonical (sorted) order."""
    task_list = sorted(tasks)
    if not 1 <= k < len(task_list):
        raise ValueError(f"k must satisfy 1 <= k < {len(task_list)}, got {k}")
    folds = []
    for held_out in itertools.combinations(task_list, k):
        held_in = tuple(t for t in task_list if t not in held_out)
        folds.append(FoldSpec(held_in=held_in, held_out=held_out))
    return folds


def subsample_subjects(subjects: Iterable[str], fraction: float, seed: int) -> tuple[str, ...]:
    """Deterministic subject subsample of size round-half-up(fraction*n), min 2."""
    subject_list = sorted(subjects)
    n = len(subject_list)
    if n < 2:
        raise ValueError("subsampling needs at least 2 subjects")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    size = min(n, max(2, math.floor(fraction * n + 0.5)))
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(n)
    return tuple(sorted(subject_list[i] for i in order[:size]))


def _fold_seed(seed: int, fold_index: int) -> int:
    return seed * 1000003 + fold_index


@dataclass(frozen=True)
class CvRecord:
    """One held-out-task evaluation: fold x seed x task."""

    fold: int
    seed: int
    task: str
    rho: float
    defined: bool
    ranker: str
    selected: tuple[str, ...]


@dataclass
class CvReport:
    """Per-record CV results; every aggregate is recomputed from the records."""

    records: list[CvRecord]
    tasks: tuple[str, ...]
    k: int
    fraction: float
    seeds: tuple[int, ...]
    variant: str
    prng: str = PRNG_DESCRIPTION

    def per_task_mean_abs_rho(self) -> dict[str, tuple[float, int]]:
        """Mean |rho| (and defined-record count) per task over folds holding it out."""
        out: dict[str, tuple[float, int]] = {}
        for task in self.tasks:
            values = [abs(r.rho) for r in self.records if r.task == task and r.defined]
            out[task] = (sum(values) / len(values) if values else float("nan"), len(values))
        return out

    def per_seed_mean_rho(self) -> dict[int, float]:
        """Mean oriented rho over all (fold, held-out task) records, per seed."""
        out: dict[int, float] = {}
        for seed in self.seeds:
            values = [r.rho for r in self.records if r.seed == seed and r.defined]
            out[seed] = sum(values) / len(values) if values else float("nan")
        return out

    def overall_mean_std(self) -> tuple[float, float]:
        """Mean and population std across seeds of the per-seed mean rho."""
        means = [v for v in self.per_seed_mean_rho().values() if not math.isnan(v)]
        if not means:
            return float("nan"), float("nan")
        mean = sum(means) / len(means)
        var = sum((v - mean) ** 2 for v in means) / len(means)
        return mean, math.sqrt(var)

    def selections(self) -> dict[tuple[int, int], tuple[str, ...]]:
        """Selected proxy ids per (fold, seed), for the frequency table."""
        out: dict[tuple[int, int], tuple[str, ...]] = {}
        for r in self.records:
            out[(r.fold, r.seed)] = r.selected
        return out

    def ranker_descriptions(self) -> dict[tuple[int, int], str]:
        """Fitted-ranker description per (fold, seed)."""
        out: dict[tuple[int, int], str] = {}
        for r in self.records:
            out[(r.fold, r.seed)] = r.ranker
        return out

    def selection_frequencies(self) -> dict[str, tuple[int, float]]:
        """Normalized selection counts per proxy id (sums to 1 when non-empty)."""
        counts: dict[str, int] = {}
        for selected in self.selections().values():
            for pid in selected:
                counts[pid] = counts.get(pid, 0) + 1
        total = sum(counts.values())
        return {pid: (c, c / total) for pid, c in sorted(counts.items())} if total else {}

    def flagged(self) -> int:
        return sum(1 for r in self.records if not r.defined)


def fit_ranker(
    spec: RankerSpec,
    features: Mapping[tuple[str, str], ProxyVector],
    scores: ScoreTable,
    heldin_tasks: Sequence[str],
    subjects: Sequence[str],
    threads: int = 1,
) -> Ranker:
    """Dispatch to the selection/fit routine for the configured variant."""
    if spec.variant == "univariate":
        return select_univariate(features, scores, heldin_tasks, subjects)
    if spec.variant == "sparse3":
        return select_sparse3(features, scores, heldin_tasks, subjects, grid=spec.grid, threads=threads)
    pairs = preference_pairs(scores, heldin_tasks, subjects)
    if spec.variant == "ranksvm_linear":
        return fit_ranksvm_linear(
            pairs, features, spec.regularization, max_iter=spec.max_iter, tol=spec.tol
        )
    return fit_ranksvm_rbf(
        pairs,
        features,
        spec.regularization,
        kernel_width=spec.kernel_width,
        max_iter=spec.max_iter,
        tol=spec.tol,
    )


def _check_coverage(
    features: Mapping[tuple[str, str], ProxyVector], subjects: Sequence[str], tasks: Sequence[str]
) -> None:
    missing = [(s, t) for s in subjects for t in tasks if (s, t) not in features]
    if missing:
        raise ValueError(f"features missing for {len(missing)} (subject, task) pairs, first: {missing[0]}")


def _any_score_variance(scores: ScoreTable, tasks: Sequence[str], subjects: Sequence[str]) -> bool:
    for task in tasks:
        values = {scores.get(s, task) for s in subjects}
        if len(values) > 1:
            return True
    return False


def run_cv(
    features: Mapping[tuple[str, str], ProxyVector],
    scores: ScoreTable,
    k: int,
    fraction: float,
    seeds: Sequence[int],
    ranker_spec: RankerSpec,
    threads: int = 1,
) -> CvReport:
    """Leave-k-tasks-out CV with subject subsampling.

    For every fold x seed the ranker is selected/fit on (held-in tasks,
    subsampled subjects) and scored by Spearman on each held-out task over
    the full subject set.  Undefined test correlations are recorded as
    flagged NaN rows, never as zeros.
    """
    tasks = scores.tasks()
    subjects = scores.subjects()
    _check_coverage(features, subjects, tasks)
    folds = make_folds(tasks, k)
    records: list[CvRecord] = []
    for fold_index, fold in enumerate(folds):
        for seed in seeds:
            subset = subsample_subjects(subjects, fraction, _fold_seed(seed, fold_index))
            fold_spec = replace(fold, subjects=subset, seed=seed)
            selection_features = {
                (s, t): features[(s, t)] for s in fold_spec.subjects for t in fold_spec.held_in
            }
            if not _any_score_variance(scores, fold_spec.held_in, subset):
                # Fully tied scores carry no ranking signal: the fold is
                # flagged undefined rather than treated as a fit failure.
                for task in fold_spec.held_out:
                    records.append(
                        CvRecord(
                            fold=fold_index,
                            seed=seed,
                            task=task,
                            rho=float("nan"),
                            defined=False,
                            ranker="unrankable:tied-scores",
                            selected=(),
                        )
                    )
                continue
            try:
                ranker = fit_ranker(ranker_spec, selection_features, scores, fold_spec.held_in, subset, threads)
            except (ValueError, UndefinedCorrelation) as exc:
                raise ProtocolError(f"fold {fold_index}, seed {seed}: {exc}") from exc
            selected = tuple(str(pid) for pid in ranker.selected_ids())
            description = ranker.describe()
            for task in fold_spec.held_out:
                task_vectors = {s: features[(s, task)] for s in subjects}
                predictions = ranker.score_task(task, task_vectors)
                try:
                    rho = spearman(
                        [predictions[s] for s in subjects], [scores.get(s, task) for s in subjects]
                    )
                    defined = True
                except UndefinedCorrelation:
                    rho, defined = float("nan"), False
                records.append(
                    CvRecord(
                        fold=fold_index,
                        seed=seed,
                        task=task,
                        rho=rho,
                        defined=defined,
                        ranker=description,
                        selected=selected,
                    )
                )
    return CvReport(
        records=records,
        tasks=tasks,
        k=k,
        fraction=fraction,
        seeds=tuple(seeds),
        variant=ranker_spec.variant,
    )


def oracle_select(
    features: Mapping[tuple[str, str], ProxyVector],
    scores: ScoreTable,
    ranker_spec: RankerSpec,
    threads: int = 1,
) -> tuple[Ranker, dict[str, float]]:
    """Selection/fit on all tasks and subjects; per-task rho on the same data.

    This is an in-sample upper bound: the returned correlations must not be
    read as generalization numbers.
    """
    tasks = scores.tasks()
    subjects = scores.subjects()
    _check_coverage(features, subjects, tasks)
    ranker = fit_ranker(ranker_spec, dict(features), scores, tasks, subjects, threads)
    per_task: dict[str, float] = {}
    for task in tasks:
        task_vectors = {s: features[(s, task)] for s in subjects}
        predictions = ranker.score_task(task, task_vectors)
        try:
            per_task[task] = spearman(
                [predictions[s] for s in subjects], [scores.get(s, task) for s in subjects]
            )
        except UndefinedCorrelation:
            per_task[task] = float("nan")
    return ranker, per_task


@dataclass(frozen=True)
class CurvePoint:
    scale: str
    compute_fraction: float
    decision_accuracy: float


def corpus_decision_curve(
    proxy_values: Mapping[tuple[str, str], float],
    target_scores: Mapping[str, float],
    compute: Mapping[str, ComputePoint],
) -> list[CurvePoint]:
    """Decision accuracy of the per-scale proxy ranking against the target ranking.

    One point per scale, ordered by compute fraction.  Every corpus must be
    present at every scale.
    """
    from .ranking import decision_accuracy

    corpora = sorted(target_scores)
    if not corpora:
        raise ValueError("no target scores given")
    points = []
    for scale in sorted(compute):
        predictions = {}
        for corpus in corpora:
            key = (corpus, scale)
            if key not in proxy_values:
                raise ValueError(f"missing proxy value for corpus={corpus!r} at scale={scale!r}")
            predictions[corpus] = proxy_values[key]
        points.append(
            CurvePoint(
                scale=scale,
                compute_fraction=compute[scale].fraction,
                decision_accuracy=decision_accuracy(predictions, dict(target_scores)),
            )
        )
    points.sort(key=lambda p: (p.compute_fraction, p.scale))
    return points
