"""Synthetic populations for pipeline tests and runnable demos.

Subjects carry a latent skill in [0, 1]; their token streams place the expert
token at rank 1 with probability increasing in skill, and downstream scores
are a noisy monotone function of the same skill.  A skill-independent generic
text stream is generated alongside, so the plain-CE baseline has nothing to
latch onto.  Everything is driven by one seeded PCG64 generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import RunManifest, TrajectoryDocument, write_manifest, write_scores, write_trajectories
from .ranking import ScoreTable
from .tokenstats import TokenRecord

DEFAULT_TASKS = ("task_a", "task_b", "task_c", "task_d", "task_e", "task_f")


@dataclass
class SyntheticPopulation:
    subjects: tuple[str, ...]
    tasks: tuple[str, ...]
    skills: dict[str, float]
    scores: ScoreTable
    # (subject, task) -> trajectory documents (one per instance x expert)
    documents: dict[tuple[str, str], list[TrajectoryDocument]]
    # subject -> skill-independent generic-text records
    generic: dict[str, list[TokenRecord]]


def _skewed_token(rng: np.random.Generator, vocab: int) -> int:
    # Quadratic skew: low ids frequent, high ids rare.
    return int(vocab * rng.random() ** 2.2)


def _trajectory_records(
    rng: np.random.Generator, skill: float, difficulty: float, length: int, vocab: int
) -> list[TokenRecord]:
    hit_prob = min(0.95, max(0.05, (0.12 + 0.78 * skill) * difficulty))
    records = []
    for _ in range(length):
        token = _skewed_token(rng, vocab)
        if rng.random() < hit_prob:
            p_expert = 0.30 + 0.55 * (0.3 + 0.7 * skill) * rng.random()
            records.append(
                TokenRecord(
                    token_id=token,
                    expert_logprob=math.log(p_expert),
                    rank=1,
                    max_prob=p_expert,
                    entropy_norm=min(0.98, max(0.02, 0.85 - 0.6 * skill + 0.15 * rng.random())),
                    expert_model_logprob=math.log(0.55 + 0.4 * rng.random()),
                )
            )
        else:
            p_expert = 0.005 + 0.08 * rng.random()
            records.append(
                TokenRecord(
                    token_id=token,
                    expert_logprob=math.log(p_expert),
                    rank=2 + int(20 * rng.random() ** 2),
                    max_prob=min(0.97, p_expert + 0.15 + 0.5 * rng.random()),
                    entropy_norm=min(0.98, max(0.02, 0.55 + 0.4 * rng.random())),
                    expert_model_logprob=math.log(0.55 + 0.4 * rng.random()),
                )
            )
    return records


def build_population(
    n_subjects: int = 20,
    tasks: tuple[str, ...] = DEFAULT_TASKS,
    n_instances: int = 4,
    n_experts: int = 1,
    window: int = 220,
    vocab: int = 64,
    generic_tokens: int = 400,
    score_noise: float = 0.02,
    seed: int = 7,
) -> SyntheticPopulation:
    rng = np.random.Generator(np.random.PCG64(seed))
    subjects = tuple(f"model_{i:02d}" for i in range(n_subjects))
    skills = {s: 0.05 + 0.9 * i / max(n_subjects - 1, 1) for i, s in enumerate(subjects)}
    difficulties = {t: 0.85 + 0.15 * rng.random() for t in tasks}

    scores: dict[tuple[str, str], float] = {}
    documents: dict[tuple[str, str], list[TrajectoryDocument]] = {}
    generic: dict[str, list[TokenRecord]] = {}

    # Generic-text CE level per subject, decoupled from skill by a fresh
    # random draw: identical pretraining-style text fits do not order skill.
    generic_level = {s: 1.2 + 1.6 * rng.random() for s in subjects}

    for subject in subjects:
        skill = skills[subject]
        stream = []
        level = generic_level[subject]
        for _ in range(generic_tokens):
            ce = level + 0.3 * rng.random()
            p = math.exp(-ce)
            stream.append(
                TokenRecord(
                    token_id=_skewed_token(rng, vocab),
                    expert_logprob=-ce,
                    rank=1 + int(6 * rng.random()),
                    max_prob=min(1.0, p + 0.2 + 0.5 * rng.random()),
                    entropy_norm=min(0.98, 0.4 + 0.5 * rng.random()),
                )
            )
        generic[subject] = stream
        for task in tasks:
            scores[(subject, task)] = min(
                1.0, max(0.0, 0.05 + 0.85 * skill + score_noise * rng.standard_normal())
            )
            docs = []
            for i in range(n_instances):
                for e in range(n_experts):
                    records = _trajectory_records(rng, skill, difficulties[task], window, vocab)
                    docs.append(
                        TrajectoryDocument(
                            task=task,
                            instance=f"inst_{i:02d}",
                            expert=f"expert_{e}",
                            answer_correct=bool(rng.random() < 0.8),
                            tokens=tuple(records),
                        )
                    )
            documents[(subject, task)] = docs
    return SyntheticPopulation(
        subjects=subjects,
        tasks=tuple(tasks),
        skills=skills,
        scores=ScoreTable(scores=scores, kind="model"),
        documents=documents,
        generic=generic,
    )


def write_population(population: SyntheticPopulation, root: Path) -> list[Path]:
    """Write per-subject manifests + trajectory files + scores.csv under root."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest_paths = []
    for subject in population.subjects:
        subject_dir = root / subject
        subject_dir.mkdir(exist_ok=True)
        files = {}
        for task in population.tasks:
            path = subject_dir / f"{task}.jsonl"
            write_trajectories(population.documents[(subject, task)], path)
            files[task] = path
        manifest = RunManifest(subject=subject, kind="model", files=files)
        manifest_path = root / f"{subject}.json"
        write_manifest(manifest, manifest_path, relative_to=root)
        manifest_paths.append(manifest_path)
    write_scores(population.scores, root / "scores.csv")
    return manifest_paths


def write_demo_series(path: Path, n_checkpoints: int = 16, seed: int = 3) -> None:
    """Checkpoint series whose accuracy follows a power law in one planted proxy."""
    rng = np.random.Generator(np.random.PCG64(seed))
    steps = np.unique(np.geomspace(10, 1.4e6, n_checkpoints).astype(int)).astype(float)
    proxy = 0.9 - 0.79 * steps ** (-0.5)
    accuracy = 0.97 - 0.5 * proxy ** (-0.6)
    accuracy = np.clip(accuracy + 0.0005 * rng.standard_normal(len(steps)), 0.0, 1.0)
    ce = 2.2 + 2.5 * steps ** (-0.3)
    noise_a = 0.3 + 0.1 * rng.random(len(steps))
    noise_b = 0.5 + 0.2 * rng.random(len(steps))
    lines = ["step,accuracy,ce_loss,uniform/top_5_accuracy,uniform/entropy,probability/margin"]
    for i in range(len(steps)):
        row = [f"{steps[i]:.0f}"]
        row += [repr(float(v)) for v in (accuracy[i], ce[i], proxy[i], noise_a[i], noise_b[i])]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_demo_datadecide(
    proxy_path: Path, targets_path: Path, compute_path: Path, n_corpora: int = 25, seed: int = 5
) -> None:
    """Corpus-ranking inputs where proxy noise shrinks as scale grows."""
    rng = np.random.Generator(np.random.PCG64(seed))
    corpora = [f"corpus_{i:02d}" for i in range(n_corpora)]
    quality = {c: rng.random() for c in corpora}
    scales = [("4M", 4e6, 4e8), ("10M", 1e7, 1e9), ("30M", 3e7, 3e9), ("60M", 6e7, 6e9), ("90M", 9e7, 9e9)]
    noise_by_scale = {"4M": 0.20, "10M": 0.12, "30M": 0.06, "60M": 0.03, "90M": 0.015}
    proxy_lines = ["corpus,scale,value"]
    for scale, _, _ in scales:
        for c in corpora:
            value = quality[c] + noise_by_scale[scale] * rng.standard_normal()
            proxy_lines.append(f"{c},{scale},{value!r}")
    Path(proxy_path).write_text("\n".join(proxy_lines) + "\n", encoding="utf-8")
    target_lines = ["corpus,score"] + [f"{c},{quality[c]!r}" for c in corpora]
    Path(targets_path).write_text("\n".join(target_lines) + "\n", encoding="utf-8")
    compute_lines = ["scale,n_params,d_tokens"]
    for scale, n, d in scales:
        compute_lines.append(f"{scale},{n!r},{d!r}")
    compute_lines.append(f"target,{1e9!r},{1e11!r}")
    Path(compute_path).write_text("\n".join(compute_lines) + "\n", encoding="utf-8")
