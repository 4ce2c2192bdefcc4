"""Token-level metric and weighting tests against a full-distribution oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxyrank.tokenstats import (
    CORE_METRICS,
    FrequencyTable,
    LossStats,
    TokenRecord,
    ValidationError,
    build_frequency_table,
    core_metrics,
    loss_stats,
    weight_vector,
)


def brute_force_core_metrics(probs, expert_index):
    """Independent oracle: every metric straight from the full distribution.

    Rank counts strictly larger probabilities; entropy is a plain sum over
    the distribution divided by log of its size.
    """
    p_expert = probs[expert_index]
    rank = 1 + sum(1 for p in probs if p > p_expert)
    max_p = max(probs)
    entropy = -sum(p * math.log(p) for p in probs if p > 0.0) / math.log(len(probs))
    return {
        "ce_loss": -math.log(p_expert),
        "top_1_accuracy": 1.0 if rank <= 1 else 0.0,
        "top_2_accuracy": 1.0 if rank <= 2 else 0.0,
        "top_3_accuracy": 1.0 if rank <= 3 else 0.0,
        "top_5_accuracy": 1.0 if rank <= 5 else 0.0,
        "entropy": entropy,
        "rank": float(rank),
        "reciprocal_rank": 1.0 / rank,
        "margin": max_p - p_expert,
        "wrong_confidence": max_p if rank > 1 else 0.0,
    }


def random_distribution(rng, max_vocab=50):
    size = int(rng.integers(2, max_vocab + 1))
    raw = rng.random(size) + 1e-3
    probs = raw / raw.sum()
    expert = int(rng.integers(0, size))
    return probs.tolist(), expert


class TestCoreMetrics:
    def test_three_way_example(self):
        record = TokenRecord.from_distribution([0.5, 0.3, 0.2], 1)
        m = core_metrics(record)
        assert m.ce_loss == pytest.approx(1.2039728043259361, abs=1e-9)
        assert m.rank == 2.0
        assert m.reciprocal_rank == 0.5
        assert (m.top_1_accuracy, m.top_2_accuracy, m.top_3_accuracy, m.top_5_accuracy) == (0, 1, 1, 1)
        assert m.margin == pytest.approx(0.2, abs=1e-12)
        assert m.wrong_confidence == 0.5
        # 0.937231 = H / log 3 with H = 1.029653 nats (direct arithmetic).
        assert m.entropy == pytest.approx(0.9372305632161295, abs=1e-9)

    def test_one_hot_expert(self):
        record = TokenRecord(token_id=0, expert_logprob=0.0, rank=1, max_prob=1.0, entropy_norm=0.0)
        m = core_metrics(record)
        assert m.ce_loss == 0.0
        assert (m.top_1_accuracy, m.top_2_accuracy, m.top_3_accuracy, m.top_5_accuracy) == (1, 1, 1, 1)
        assert m.margin == 0.0 and m.wrong_confidence == 0.0 and m.entropy == 0.0

    def test_uniform_four_way(self):
        record = TokenRecord.from_distribution([0.25] * 4, 3)
        m = core_metrics(record)
        assert m.rank == 1.0
        assert m.entropy == pytest.approx(1.0, abs=1e-12)
        assert m.ce_loss == pytest.approx(math.log(4), abs=1e-12)
        assert m.margin == 0.0

    def test_oracle_equivalence_bulk(self):
        rng = np.random.Generator(np.random.PCG64(11))
        for _ in range(500):
            probs, expert = random_distribution(rng)
            record = TokenRecord.from_distribution(probs, expert)
            got = core_metrics(record)
            want = brute_force_core_metrics(probs, expert)
            for name in CORE_METRICS:
                assert getattr(got, name) == pytest.approx(want[name], abs=1e-9), name

    @given(st.integers(0, 2**31), st.integers(2, 50))
    @settings(max_examples=200, deadline=None)
    def test_bounds_and_consistency(self, seed, vocab):
        rng = np.random.Generator(np.random.PCG64(seed))
        raw = rng.random(vocab) + 1e-3
        probs = (raw / raw.sum()).tolist()
        expert = int(rng.integers(0, vocab))
        m = core_metrics(TokenRecord.from_distribution(probs, expert))
        assert m.ce_loss >= 0
        assert m.top_1_accuracy <= m.top_2_accuracy <= m.top_3_accuracy <= m.top_5_accuracy
        assert 0 <= m.entropy <= 1
        assert m.rank >= 1 and 0 < m.reciprocal_rank <= 1
        assert 0 <= m.margin < 1 and 0 <= m.wrong_confidence <= 1
        if m.rank == 1:
            assert m.top_1_accuracy == 1 and m.wrong_confidence == 0 and m.margin <= 1e-9
        else:
            assert m.top_1_accuracy == 0 and m.wrong_confidence > 0

    def test_validation_names_field(self):
        bad_rank = TokenRecord(token_id=0, expert_logprob=-1.0, rank=0, max_prob=0.5, entropy_norm=0.5)
        with pytest.raises(ValidationError) as err:
            core_metrics(bad_rank)
        assert err.value.field == "rank"

        too_likely = TokenRecord(token_id=0, expert_logprob=-0.01, rank=2, max_prob=0.5, entropy_norm=0.5)
        with pytest.raises(ValidationError) as err:
            core_metrics(too_likely)
        assert "max_prob" in str(err.value)

        bad_tie = TokenRecord(token_id=0, expert_logprob=-1.0, rank=1, max_prob=0.9, entropy_norm=0.5)
        with pytest.raises(ValidationError) as err:
            core_metrics(bad_tie)
        assert err.value.field == "rank"


class TestFrequencyTable:
    def test_counting(self):
        table = build_frequency_table([[5, 5, 7]])
        assert table.frequency(5) == pytest.approx(2 / 3)
        assert table.frequency(7) == pytest.approx(1 / 3)
        assert table.total_tokens == 3

    def test_singleton(self):
        table = build_frequency_table([[9]])
        assert table.frequency(9) == 1.0

    def test_two_trajectories(self):
        table = build_frequency_table([[1], [2]])
        assert table.frequency(1) == 0.5 and table.frequency(2) == 0.5

    def test_unseen_token_is_zero(self):
        table = build_frequency_table([[1, 2]])
        assert table.frequency(99) == 0.0

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            build_frequency_table([])
        with pytest.raises(ValueError):
            build_frequency_table([[], []])

    def test_frequencies_sum_to_one(self):
        rng = np.random.Generator(np.random.PCG64(3))
        trajectories = [rng.integers(0, 30, size=rng.integers(1, 50)).tolist() for _ in range(10)]
        table = build_frequency_table(trajectories)
        assert sum(table.frequencies.values()) == pytest.approx(1.0, abs=1e-12)
        assert all(0 < f <= 1 for f in table.frequencies.values())


class TestLossStats:
    def _records(self, losses):
        return [
            TokenRecord(token_id=0, expert_logprob=-loss, rank=2, max_prob=0.9, entropy_norm=0.5)
            for loss in losses
        ]

    def test_constant(self):
        stats = loss_stats(self._records([1.0, 1.0, 1.0]))
        assert stats.mean_ce == 1.0 and stats.std_ce == 0.0

    def test_population_std_two_points(self):
        stats = loss_stats(self._records([0.0, 2.0]))
        assert stats.mean_ce == 1.0 and stats.std_ce == 1.0

    def test_population_std_three_points(self):
        stats = loss_stats(self._records([1.0, 2.0, 3.0]))
        assert stats.mean_ce == 2.0
        assert stats.std_ce == pytest.approx(math.sqrt(2 / 3), abs=1e-9)

    def test_empty_window(self):
        with pytest.raises(ValueError):
            loss_stats([])


class TestWeightVector:
    def test_probability_complement(self):
        record = TokenRecord(token_id=1, expert_logprob=math.log(0.3), rank=2, max_prob=0.5, entropy_norm=0.4)
        wv = weight_vector(record, FrequencyTable({1: 0.25}, 4), LossStats(1.0, 0.5))
        assert wv.probability == pytest.approx(0.3, abs=1e-12)
        assert wv.probability + wv.expert_disagreement == 1.0
        assert wv.entropy + wv.inverse_entropy == 1.0
        assert wv.frequency + wv.inverse_frequency == 1.0
        assert wv.uniform == 1.0

    def test_gaussian_degenerate_std(self):
        record = TokenRecord(token_id=1, expert_logprob=-2.0, rank=3, max_prob=0.4, entropy_norm=0.4)
        wv = weight_vector(record, FrequencyTable({}, 1), LossStats(2.0, 0.0))
        assert wv.gaussian_nll == 1.0

    def test_gaussian_one_sigma(self):
        record = TokenRecord(token_id=1, expert_logprob=-2.0, rank=3, max_prob=0.4, entropy_norm=0.4)
        wv = weight_vector(record, FrequencyTable({}, 1), LossStats(1.0, 1.0))
        assert wv.gaussian_nll == pytest.approx(math.exp(-0.5), abs=1e-12)

    def test_gaussian_peak_at_mean(self):
        stats = LossStats(1.5, 0.7)
        at_mean = TokenRecord(token_id=1, expert_logprob=-1.5, rank=2, max_prob=0.9, entropy_norm=0.4)
        off_mean = TokenRecord(token_id=1, expert_logprob=-1.9, rank=2, max_prob=0.9, entropy_norm=0.4)
        table = FrequencyTable({}, 1)
        assert weight_vector(at_mean, table, stats).gaussian_nll == 1.0
        assert weight_vector(off_mean, table, stats).gaussian_nll < 1.0

    @given(st.integers(0, 2**31))
    @settings(max_examples=150, deadline=None)
    def test_bounds_on_random_records(self, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        probs, expert = random_distribution(rng, max_vocab=20)
        record = TokenRecord.from_distribution(probs, expert)
        table = build_frequency_table([[expert, expert + 1]])
        stats = LossStats(float(rng.random() * 3), float(rng.random()))
        wv = weight_vector(record, table, stats)
        for value in wv.as_tuple():
            assert value >= 0.0
        # The Gaussian kernel is positive in exact arithmetic but may
        # underflow to 0.0 for far outliers; such positions simply stop
        # contributing to that weighting scheme.
        assert 0 <= wv.gaussian_nll <= 1.0
        assert wv.probability + wv.expert_disagreement == 1.0
