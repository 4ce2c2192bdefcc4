"""Per-token statistics of a candidate model's next-token distribution.

Everything downstream works from :class:`TokenRecord`, a five-number summary
of the candidate's predictive distribution at one position of an expert
trajectory.  From a record (plus a corpus frequency table and per-window loss
statistics) this module derives the ten core metrics and the eight weighting
values that the aggregation layer combines into proxy metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

CORE_METRICS: tuple[str, ...] = (
    "ce_loss",
    "top_1_accuracy",
    "top_2_accuracy",
    "top_3_accuracy",
    "top_5_accuracy",
    "entropy",
    "rank",
    "reciprocal_rank",
    "margin",
    "wrong_confidence",
)

WEIGHTINGS: tuple[str, ...] = (
    "uniform",
    "probability",
    "expert_disagreement",
    "entropy",
    "inverse_entropy",
    "frequency",
    "inverse_frequency",
    "gaussian_nll",
)

# Tolerance used by the record invariants that compare exp(logprob) against
# the stored max probability.
PROB_TOL = 1e-9

# Below this, the per-window loss std is treated as zero and the Gaussian
# kernel degenerates to uniform weights.
DEGENERATE_STD = 1e-12


class ValidationError(ValueError):
    """A record or document violates one of its invariants.

    ``field`` names the offending field so ingest can point at it.
    """

    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class TokenRecord:
    """Summary of the candidate's distribution at one expert-token position.

    ``expert_logprob`` is the natural-log probability of the realized expert
    token, ``rank`` its competition rank (1 = argmax, ties resolved in the
    expert's favor), ``max_prob`` the distribution's mode probability and
    ``entropy_norm`` the Shannon entropy divided by log of the vocabulary
    size.  ``expert_model_logprob`` is the expert model's own log-probability
    of the token; it is only needed by the expert-likelihood-weighted CE
    baseline and may be absent.
    """

    token_id: int
    expert_logprob: float
    rank: int
    max_prob: float
    entropy_norm: float
    expert_model_logprob: float | None = None

    def validate(self) -> None:
        if not isinstance(self.token_id, int) or self.token_id < 0:
            raise ValidationError("token_id", f"token_id must be a non-negative integer, got {self.token_id!r}")
        if not math.isfinite(self.expert_logprob) or self.expert_logprob > 0:
            raise ValidationError(
                "expert_logprob", f"expert_logprob must be finite and <= 0, got {self.expert_logprob!r}"
            )
        if not isinstance(self.rank, int) or self.rank < 1:
            raise ValidationError("rank", f"rank must be >= 1, got {self.rank!r}")
        if not (0.0 < self.max_prob <= 1.0):
            raise ValidationError("max_prob", f"max_prob must be in (0, 1], got {self.max_prob!r}")
        if not (0.0 <= self.entropy_norm <= 1.0):
            raise ValidationError("entropy_norm", f"entropy_norm must be in [0, 1], got {self.entropy_norm!r}")
        prob = math.exp(self.expert_logprob)
        if prob > self.max_prob + PROB_TOL:
            raise ValidationError(
                "expert_logprob",
                f"exp(expert_logprob)={prob!r} exceeds max_prob={self.max_prob!r} beyond tolerance",
            )
        if self.rank == 1 and abs(prob - self.max_prob) > PROB_TOL:
            raise ValidationError(
                "rank",
                f"rank 1 requires exp(expert_logprob)={prob!r} to equal max_prob={self.max_prob!r}",
            )
        if self.expert_model_logprob is not None:
            if not math.isfinite(self.expert_model_logprob) or self.expert_model_logprob > 0:
                raise ValidationError(
                    "expert_model_logprob",
                    f"expert_model_logprob must be finite and <= 0, got {self.expert_model_logprob!r}",
                )

    @classmethod
    def from_distribution(
        cls,
        probs: Sequence[float],
        expert_index: int,
        expert_model_logprob: float | None = None,
    ) -> "TokenRecord":
        """Build a record from a full probability vector.

        Competition rank counts strictly larger probabilities, so ties go to
        the expert token.  Entropy is normalized by log of the vector length.
        """
        if len(probs) < 2:
            raise ValueError("distribution needs at least 2 entries")
        p_expert = float(probs[expert_index])
        if p_expert <= 0.0:
            raise ValueError("expert token must have positive probability")
        rank = 1 + sum(1 for p in probs if p > p_expert)
        entropy = -sum(p * math.log(p) for p in probs if p > 0.0)
        entropy_norm = entropy / math.log(len(probs))
        # Guard against rounding pushing the normalized value a hair outside [0, 1].
        entropy_norm = min(max(entropy_norm, 0.0), 1.0)
        return cls(
            token_id=expert_index,
            expert_logprob=min(math.log(p_expert), 0.0),
            rank=rank,
            max_prob=float(max(probs)),
            entropy_norm=entropy_norm,
            expert_model_logprob=expert_model_logprob,
        )


@dataclass(frozen=True)
class CoreMetrics:
    """The ten per-token core metrics, in library order (see CORE_METRICS)."""

    ce_loss: float
    top_1_accuracy: float
    top_2_accuracy: float
    top_3_accuracy: float
    top_5_accuracy: float
    entropy: float
    rank: float
    reciprocal_rank: float
    margin: float
    wrong_confidence: float

    def as_tuple(self) -> tuple[float, ...]:
        return (
            self.ce_loss,
            self.top_1_accuracy,
            self.top_2_accuracy,
            self.top_3_accuracy,
            self.top_5_accuracy,
            self.entropy,
            self.rank,
            self.reciprocal_rank,
            self.margin,
            self.wrong_confidence,
        )


@dataclass(frozen=True)
class WeightVector:
    """The eight per-token weighting values, in library order (see WEIGHTINGS)."""

    uniform: float
    probability: float
    expert_disagreement: float
    entropy: float
    inverse_entropy: float
    frequency: float
    inverse_frequency: float
    gaussian_nll: float

    def as_tuple(self) -> tuple[float, ...]:
        return (
            self.uniform,
            self.probability,
            self.expert_disagreement,
            self.entropy,
            self.inverse_entropy,
            self.frequency,
            self.inverse_frequency,
            self.gaussian_nll,
        )


@dataclass(frozen=True)
class FrequencyTable:
    """Relative token frequencies over an expert-trajectory corpus.

    Lookups of tokens unseen in the corpus return 0, so their inverse
    frequency weight is 1.
    """

    frequencies: dict[int, float]
    total_tokens: int

    def frequency(self, token_id: int) -> float:
        return self.frequencies.get(token_id, 0.0)


@dataclass(frozen=True)
class LossStats:
    """Mean and population std of CE loss over one trajectory window."""

    mean_ce: float
    std_ce: float


def core_metrics(record: TokenRecord) -> CoreMetrics:
    """Derive the ten core metrics from a validated token record.

    Raises :class:`ValidationError` if the record violates its invariants.
    """
    record.validate()
    prob = math.exp(record.expert_logprob)
    # exp(logprob) may exceed max_prob by up to the validation tolerance;
    # clamp so the margin invariant (margin >= 0) holds exactly.
    margin = max(record.max_prob - prob, 0.0)
    wrong_confidence = record.max_prob if record.rank > 1 else 0.0
    return CoreMetrics(
        ce_loss=-record.expert_logprob,
        top_1_accuracy=1.0 if record.rank <= 1 else 0.0,
        top_2_accuracy=1.0 if record.rank <= 2 else 0.0,
        top_3_accuracy=1.0 if record.rank <= 3 else 0.0,
        top_5_accuracy=1.0 if record.rank <= 5 else 0.0,
        entropy=record.entropy_norm,
        rank=float(record.rank),
        reciprocal_rank=1.0 / record.rank,
        margin=margin,
        wrong_confidence=wrong_confidence,
    )


def build_frequency_table(trajectories: Iterable[Sequence[int]]) -> FrequencyTable:
    """Count relative token frequencies over the given token-id sequences.

    The table must be built over the same truncated windows that are later
    aggregated, otherwise frequency weights would mix corpora.
    """
    counts: dict[int, int] = {}
    total = 0
    for tokens in trajectories:
        for token_id in tokens:
            counts[token_id] = counts.get(token_id, 0) + 1
            total += 1
    if total == 0:
        raise ValueError("cannot build a frequency table from an empty corpus")
    return FrequencyTable(
        frequencies={token: count / total for token, count in counts.items()},
        total_tokens=total,
    )


def loss_stats(window: Sequence[TokenRecord]) -> LossStats:
    """Population mean/std of CE loss over a trajectory window."""
    if not window:
        raise ValueError("loss_stats requires a non-empty window")
    losses = [-r.expert_logprob for r in window]
    mean = sum(losses) / len(losses)
    var = sum((x - mean) ** 2 for x in losses) / len(losses)
    return LossStats(mean_ce=mean, std_ce=math.sqrt(var))


def weight_vector(record: TokenRecord, freq: FrequencyTable, stats: LossStats) -> WeightVector:
    """Derive the eight weighting values for one token position.

    The Gaussian kernel isolates positions whose loss sits near the window's
    typical loss level; a constant-loss window has no such level, so a
    degenerate std falls back to uniform weights.
    """
    record.validate()
    prob = math.exp(record.expert_logprob)
    token_freq = freq.frequency(record.token_id)
    if stats.std_ce < DEGENERATE_STD:
        gaussian = 1.0
    else:
        ce = -record.expert_logprob
        gaussian = math.exp(-((ce - stats.mean_ce) ** 2) / (2.0 * stats.std_ce**2))
    return WeightVector(
        uniform=1.0,
        probability=prob,
        expert_disagreement=1.0 - prob,
        entropy=record.entropy_norm,
        inverse_entropy=1.0 - record.entropy_norm,
        frequency=token_freq,
        inverse_frequency=1.0 - token_freq,
        gaussian_nll=gaussian,
    )
