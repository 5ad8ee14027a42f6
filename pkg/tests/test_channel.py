"""Channel checks: gain statistics against the closed-form tail, decisions."""

import numpy as np
import pytest

from slimqfl.channel import (
    ChannelConfig,
    Decision,
    db_to_linear,
    decide,
    default_thresholds,
    draw_outcome,
    sample_gain,
    success_probability,
    throughput,
)


class TestSampleGain:
    def test_unit_mean(self):
        rng = np.random.default_rng(0)
        draws = np.array([sample_gain(rng) for _ in range(10**6)])
        assert abs(draws.mean() - 1.0) < 0.01

    def test_nonnegative(self):
        rng = np.random.default_rng(1)
        assert all(sample_gain(rng) >= 0 for _ in range(1000))

    def test_reproducible(self):
        a = [sample_gain(np.random.default_rng(42)) for _ in range(1)]
        b = [sample_gain(np.random.default_rng(42)) for _ in range(1)]
        assert a == b


class TestThroughput:
    def test_gain_equal_noise_gives_one_bit(self):
        assert throughput(0.01, 0.01) == pytest.approx(1.0, abs=1e-12)

    def test_zero_gain(self):
        assert throughput(0.0, 0.5) == 0.0

    def test_minus_20db_example(self):
        assert throughput(1.0, 0.01) == pytest.approx(6.658211482751795, abs=1e-12)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            throughput(1.0, 0.0)
        with pytest.raises(ValueError):
            throughput(-1.0, 0.1)


class TestDecide:
    CFG = ChannelConfig(sigma2=0.01, u_pole=1.0, u_whole=5.0)

    def test_boundary_is_inclusive(self):
        assert decide(5.0, self.CFG) is Decision.WHOLE
        assert decide(1.0, self.CFG) is Decision.POLE_ONLY

    def test_three_way_split(self):
        assert decide(7.2, self.CFG) is Decision.WHOLE
        assert decide(3.0, self.CFG) is Decision.POLE_ONLY
        assert decide(0.5, self.CFG) is Decision.NONE

    def test_monotone_in_gain(self):
        rng = np.random.default_rng(2)
        order = {Decision.NONE: 0, Decision.POLE_ONLY: 1, Decision.WHOLE: 2}
        gains = np.sort([sample_gain(rng) for _ in range(500)])
        ranks = [order[decide(throughput(g, self.CFG.sigma2), self.CFG)] for g in gains]
        assert all(a <= b for a, b in zip(ranks, ranks[1:]))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ChannelConfig(sigma2=-0.1, u_pole=1.0, u_whole=2.0)
        with pytest.raises(ValueError):
            ChannelConfig(sigma2=0.1, u_pole=3.0, u_whole=2.0)
        # Zero thresholds are allowed: the always-succeeding channel.
        cfg = ChannelConfig(sigma2=0.1, u_pole=0.0, u_whole=0.0)
        assert decide(0.0, cfg) is Decision.WHOLE


class TestSuccessProbability:
    def test_zero_threshold_is_certain(self):
        assert success_probability(0.0, 0.3) == 1.0

    def test_unit_noise_unit_rate(self):
        assert success_probability(1.0, 1.0) == pytest.approx(np.exp(-1), abs=1e-12)

    def test_minus_20db(self):
        assert success_probability(1.0, 0.01) == pytest.approx(np.exp(-0.01), abs=1e-12)

    def test_rejects_negative_threshold(self):
        with pytest.raises(ValueError):
            success_probability(-1.0, 0.1)


class TestDefaultThresholds:
    def test_payload_ratio_and_anchor(self):
        u_pole, u_whole = default_thresholds()
        assert 0 < u_pole < u_whole
        assert u_pole == pytest.approx(u_whole / 10, abs=1e-12)
        # The rule anchors whole-model success at 0.95 for -40 dB noise.
        assert success_probability(u_whole, db_to_linear(-40)) == pytest.approx(0.95, abs=1e-12)

    def test_from_db_uses_rule_when_unset(self):
        cfg = ChannelConfig.from_db(-30.0)
        u_pole, u_whole = default_thresholds()
        assert cfg.sigma2 == pytest.approx(1e-3)
        assert (cfg.u_pole, cfg.u_whole) == (u_pole, u_whole)
        override = ChannelConfig.from_db(-30.0, u_pole=0.5, u_whole=2.0)
        assert (override.u_pole, override.u_whole) == (0.5, 2.0)


class TestMonteCarloAgainstClosedForm:
    @pytest.mark.parametrize("sigma_db", [-20.0, -30.0, -40.0])
    def test_empirical_tail_matches(self, sigma_db):
        sigma2 = db_to_linear(sigma_db)
        u_pole, u_whole = default_thresholds()
        rng = np.random.default_rng(int(-sigma_db))
        n = 10**5
        rates = np.array([throughput(sample_gain(rng), sigma2) for _ in range(n)])
        for u in (u_pole, u_whole):
            p = success_probability(u, sigma2)
            tolerance = 3 * np.sqrt(p * (1 - p) / n)
            assert abs(np.mean(rates >= u) - p) <= tolerance

    def test_draw_outcome_consistency(self):
        cfg = ChannelConfig.from_db(-30.0)
        rng = np.random.default_rng(3)
        for _ in range(200):
            outcome = draw_outcome(rng, cfg)
            assert outcome.rate == pytest.approx(throughput(outcome.gain, cfg.sigma2))
            assert outcome.decision is decide(outcome.rate, cfg)
