"""Aggregation tests: truncation, weighted averages, expert/instance means."""

import math

import numpy as np
import pytest

from proxyrank.proxylib import (
    DEFAULT_SIGNS,
    LIBRARY_SIZE,
    PROXY_IDS,
    ProxyId,
    ProxyVector,
    SignTable,
    baseline_generic_ce,
    baseline_rbridge,
    instance_proxy_vector,
    task_proxy_vector,
    truncate_window,
)
from proxyrank.tokenstats import (
    CORE_METRICS,
    WEIGHTINGS,
    TokenRecord,
    build_frequency_table,
)

from test_tokenstats import brute_force_core_metrics, random_distribution


def window_from_distributions(distributions, experts):
    return [TokenRecord.from_distribution(p, e) for p, e in zip(distributions, experts)]


def brute_force_instance_vector(distributions, experts, freq, signs=None):
    """Direct aggregation from raw distributions, independent of TokenRecord.

    Recomputes metrics, weights (including the Gaussian kernel from the
    window's own loss statistics) and the weighted average per library entry.
    """
    signs = signs or DEFAULT_SIGNS
    losses = [-math.log(p[e]) for p, e in zip(distributions, experts)]
    mean = sum(losses) / len(losses)
    std = math.sqrt(sum((x - mean) ** 2 for x in losses) / len(losses))
    values = {}
    for weighting in WEIGHTINGS:
        for core in CORE_METRICS:
            num = 0.0
            den = 0.0
            for probs, expert, loss in zip(distributions, experts, losses):
                metrics = brute_force_core_metrics(probs, expert)
                p_expert = probs[expert]
                entropy = metrics["entropy"]
                if weighting == "uniform":
                    w = 1.0
                elif weighting == "probability":
                    w = p_expert
                elif weighting == "expert_disagreement":
                    w = 1.0 - p_expert
                elif weighting == "entropy":
                    w = entropy
                elif weighting == "inverse_entropy":
                    w = 1.0 - entropy
                elif weighting == "frequency":
                    w = freq.frequency(expert)
                elif weighting == "inverse_frequency":
                    w = 1.0 - freq.frequency(expert)
                else:
                    w = 1.0 if std < 1e-12 else math.exp(-((loss - mean) ** 2) / (2 * std**2))
                num += metrics[core] * w
                den += w
            if den > 0:
                values[ProxyId(weighting, core)] = signs[core] * num / den
    return values


class TestTruncation:
    def test_long_trajectory_keeps_last_window(self):
        records = [
            TokenRecord(token_id=i, expert_logprob=-1.0, rank=2, max_prob=0.5, entropy_norm=0.5)
            for i in range(1500)
        ]
        window = truncate_window(records, 1000)
        assert len(window) == 1000
        assert window[0].token_id == 500 and window[-1].token_id == 1499

    def test_short_trajectory_untouched(self):
        records = [
            TokenRecord(token_id=i, expert_logprob=-1.0, rank=2, max_prob=0.5, entropy_norm=0.5)
            for i in range(10)
        ]
        assert truncate_window(records, 1000) == records

    def test_suffix_of_three(self):
        records = [
            TokenRecord(token_id=i, expert_logprob=-1.0, rank=2, max_prob=0.5, entropy_norm=0.5)
            for i in range(3)
        ]
        assert truncate_window(records, 2) == records[1:]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            truncate_window([], 10)


class TestSignTable:
    def test_defaults(self):
        table = SignTable()
        assert table.sign("top_5_accuracy") == 1
        assert table.sign("reciprocal_rank") == 1
        for negative in ("ce_loss", "entropy", "rank", "margin", "wrong_confidence"):
            assert table.sign(negative) == -1

    def test_override(self):
        table = SignTable.with_overrides({"entropy": 1})
        assert table.sign("entropy") == 1

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SignTable.with_overrides({"entropy": 2})
        with pytest.raises(ValueError):
            SignTable({"ce_loss": -1})  # incomplete


class TestInstanceVector:
    def test_two_token_weighted_average(self):
        # core metric ce_loss values [1.0, 0.0] with probability weights [0.75, 0.25]
        # is not convenient to plant directly; use top_1_accuracy = [1, 0] with
        # probability weights [0.75, 0.25] -> (0.75*1 + 0.25*0) / 1.0 = 0.75.
        hit = TokenRecord(token_id=1, expert_logprob=math.log(0.75), rank=1, max_prob=0.75, entropy_norm=0.5)
        miss = TokenRecord(token_id=2, expert_logprob=math.log(0.25), rank=2, max_prob=0.5, entropy_norm=0.5)
        freq = build_frequency_table([[1, 2]])
        vector = instance_proxy_vector([hit, miss], freq)
        assert vector.values[ProxyId("probability", "top_1_accuracy")] == pytest.approx(0.75, abs=1e-12)

    def test_uniform_weighting_is_signed_mean(self):
        rng = np.random.Generator(np.random.PCG64(5))
        distributions, experts = [], []
        for _ in range(15):
            probs, expert = random_distribution(rng, max_vocab=10)
            distributions.append(probs)
            experts.append(expert)
        window = window_from_distributions(distributions, experts)
        freq = build_frequency_table([experts])
        vector = instance_proxy_vector(window, freq)
        losses = [-math.log(p[e]) for p, e in zip(distributions, experts)]
        assert vector.values[ProxyId("uniform", "ce_loss")] == pytest.approx(
            -sum(losses) / len(losses), abs=1e-12
        )

    def test_perfect_prediction_zero_loss(self):
        window = [
            TokenRecord(token_id=0, expert_logprob=0.0, rank=1, max_prob=1.0, entropy_norm=0.0)
            for _ in range(4)
        ]
        freq = build_frequency_table([[0]])
        vector = instance_proxy_vector(window, freq)
        assert vector.values[ProxyId("uniform", "ce_loss")] == 0.0

    def test_brute_force_equivalence(self):
        rng = np.random.Generator(np.random.PCG64(17))
        for _ in range(50):
            length = int(rng.integers(1, 21))
            distributions, experts = [], []
            for _ in range(length):
                probs, expert = random_distribution(rng, max_vocab=10)
                distributions.append(probs)
                experts.append(expert)
            window = window_from_distributions(distributions, experts)
            freq = build_frequency_table([experts])
            vector = instance_proxy_vector(window, freq)
            expected = brute_force_instance_vector(distributions, experts, freq)
            assert set(vector.values) == set(expected)
            for pid, want in expected.items():
                assert vector.values[pid] == pytest.approx(want, abs=1e-12), str(pid)

    def test_weight_scale_invariance(self):
        # Scaling a weighting scheme by c > 0 cancels in the weighted average;
        # verified against the brute-force oracle with scaled weights.
        rng = np.random.Generator(np.random.PCG64(23))
        distributions, experts = [], []
        for _ in range(12):
            probs, expert = random_distribution(rng, max_vocab=8)
            distributions.append(probs)
            experts.append(expert)
        freq = build_frequency_table([experts])
        window = window_from_distributions(distributions, experts)
        vector = instance_proxy_vector(window, freq)
        losses = [-math.log(p[e]) for p, e in zip(distributions, experts)]
        for c in (3.0, 0.25, 1e6):
            for core in CORE_METRICS:
                metrics = [brute_force_core_metrics(p, e) for p, e in zip(distributions, experts)]
                weights = [c * (1.0 - p[e]) for p, e in zip(distributions, experts)]
                scaled = sum(m[core] * w for m, w in zip(metrics, weights)) / sum(weights)
                scaled *= DEFAULT_SIGNS[core]
                assert vector.values[ProxyId("expert_disagreement", core)] == pytest.approx(
                    scaled, abs=1e-12
                )
        del losses

    def test_zero_weight_mass_marked_undefined(self):
        # Fully confident records everywhere: entropy weights are all zero.
        window = [
            TokenRecord(token_id=0, expert_logprob=0.0, rank=1, max_prob=1.0, entropy_norm=0.0)
            for _ in range(3)
        ]
        freq = build_frequency_table([[0]])
        vector = instance_proxy_vector(window, freq)
        for core in CORE_METRICS:
            pid = ProxyId("entropy", core)
            assert pid not in vector.values
            assert vector.undefined_counts[pid] == 1
        assert len(vector.values) + len(vector.undefined_counts) == LIBRARY_SIZE


class TestTaskVector:
    def _vec(self, value, pid=ProxyId("uniform", "ce_loss"), subject="m", task="t"):
        return ProxyVector(subject=subject, task=task, values={pid: value})

    def test_single_instance_single_expert_identity(self):
        instance = self._vec(0.37)
        task = task_proxy_vector([[instance]])
        assert task.values == instance.values

    def test_mean_over_instances(self):
        task = task_proxy_vector([[self._vec(0.2)], [self._vec(0.4)]])
        assert task.values[ProxyId("uniform", "ce_loss")] == pytest.approx(0.3, abs=1e-15)

    def test_experts_averaged_before_instances(self):
        task = task_proxy_vector([[self._vec(0.1), self._vec(0.3)], [self._vec(0.2)]])
        assert task.values[ProxyId("uniform", "ce_loss")] == pytest.approx(0.2, abs=1e-15)

    def test_permutation_invariance(self):
        rng = np.random.Generator(np.random.PCG64(9))
        instances = [[self._vec(float(rng.random()))] for _ in range(7)]
        forward = task_proxy_vector(instances)
        reversed_ = task_proxy_vector(list(reversed(instances)))
        pid = ProxyId("uniform", "ce_loss")
        assert forward.values[pid] == pytest.approx(reversed_.values[pid], abs=1e-12)

    def test_undefined_entries_skipped_with_counts(self):
        pid = ProxyId("entropy", "ce_loss")
        defined = ProxyVector(subject="m", task="t", values={pid: 0.5})
        undefined = ProxyVector(subject="m", task="t", values={}, undefined_counts={pid: 1})
        task = task_proxy_vector([[defined], [undefined]])
        assert task.values[pid] == 0.5  # only the defined instance contributes
        assert task.undefined_counts[pid] == 1

    def test_no_instances_rejected(self):
        with pytest.raises(ValueError):
            task_proxy_vector([])


class TestOrientation:
    def test_stronger_model_scores_higher_on_every_entry(self):
        # Model A places strictly more mass on the expert token everywhere.
        rng = np.random.Generator(np.random.PCG64(31))
        freq_tokens = []
        windows = {"A": [], "B": []}
        for _ in range(30):
            expert = int(rng.integers(0, 6))
            base = rng.random(6) + 0.05
            weak = base / base.sum()
            strong = weak.copy()
            strong[expert] += 1.5
            strong /= strong.sum()
            windows["A"].append(TokenRecord.from_distribution(strong.tolist(), expert))
            windows["B"].append(TokenRecord.from_distribution(weak.tolist(), expert))
            freq_tokens.append(expert)
        freq = build_frequency_table([freq_tokens])
        vec_a = instance_proxy_vector(windows["A"], freq)
        vec_b = instance_proxy_vector(windows["B"], freq)
        for core in ("top_1_accuracy", "top_2_accuracy", "top_3_accuracy", "top_5_accuracy",
                     "reciprocal_rank", "ce_loss", "rank", "margin", "wrong_confidence"):
            pid = ProxyId("uniform", core)
            assert vec_a.values[pid] >= vec_b.values[pid], core


class TestBaselines:
    def _record(self, loss, elp=None):
        return TokenRecord(
            token_id=0, expert_logprob=-loss, rank=2, max_prob=0.9, entropy_norm=0.5,
            expert_model_logprob=elp,
        )

    def test_generic_ce_mean(self):
        assert baseline_generic_ce([self._record(1.0), self._record(3.0)]) == 2.0

    def test_generic_ce_zero(self):
        records = [
            TokenRecord(token_id=0, expert_logprob=0.0, rank=1, max_prob=1.0, entropy_norm=0.0)
        ] * 3
        assert baseline_generic_ce(records) == 0.0

    def test_generic_ce_singleton(self):
        assert baseline_generic_ce([self._record(1.5)]) == 1.5

    def test_generic_ce_empty(self):
        with pytest.raises(ValueError):
            baseline_generic_ce([])

    def test_rbridge_equal_weights(self):
        window = [self._record(1.0, elp=0.0), self._record(3.0, elp=0.0)]
        assert baseline_rbridge(window) == 2.0

    def test_rbridge_weighted(self):
        window = [
            self._record(1.0, elp=math.log(0.9)),
            self._record(3.0, elp=math.log(0.1)),
        ]
        assert baseline_rbridge(window) == pytest.approx(1.2, abs=1e-12)

    def test_rbridge_missing_logprob(self):
        window = [self._record(1.0, elp=0.0), self._record(3.0)]
        with pytest.raises(ValueError, match="expert"):
            baseline_rbridge(window)


def test_library_has_80_round_tripping_ids():
    assert len(PROXY_IDS) == 80
    assert len(set(PROXY_IDS)) == 80
    for pid in PROXY_IDS:
        assert ProxyId.parse(str(pid)) == pid
    assert str(ProxyId("inverse_frequency", "top_1_accuracy")) == "inverse_frequency/top_1_accuracy"
