import math

import numpy as np
import pytest

from agents import MonteCarloAgent
from models.schemas import SampleKind
from utils.errors import UsageError
from utils.sampling import batch_generator, run_batches
from utils.shift_tools import parse_pattern


def within(stats, exact_tail, sigmas: float = 5.0) -> bool:
    for k, empirical in zip(stats.tail_k, stats.empirical_tail):
        p = float(exact_tail[k])
        sigma = max(math.sqrt(p * (1 - p) / stats.n_valid), 1 / stats.n_valid)
        if abs(empirical - p) > sigmas * sigma + 1e-12:
            return False
    return True


class TestDeterminism:

    def test_same_seed_same_samples(self, monte_carlo_agent, uniform2):
        pattern = parse_pattern("011")
        a = monte_carlo_agent.sample_hitting(uniform2, pattern, 5000, seed=7)
        b = monte_carlo_agent.sample_hitting(uniform2, pattern, 5000, seed=7)
        np.testing.assert_array_equal(a.samples, b.samples)
        assert a.model_dump() == b.model_dump()

    def test_threads_do_not_change_samples(self, monte_carlo_agent, markov):
        pattern = parse_pattern("01")
        threaded = MonteCarloAgent(jobs=2, batch_size=2048)
        a = monte_carlo_agent.sample_return(markov, pattern, 5000, seed=11)
        b = threaded.sample_return(markov, pattern, 5000, seed=11)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_batches_use_their_own_streams(self):
        first = batch_generator(3, 0).random(4)
        second = batch_generator(3, 1).random(4)
        assert not np.array_equal(first, second)
        np.testing.assert_array_equal(first, batch_generator(3, 0).random(4))

    def test_batches_are_concatenated_in_order(self):
        taus = run_batches(lambda rng, size: np.full(size, size), 10, 0, 4, jobs=3)
        assert taus.tolist() == [4] * 8 + [2, 2]


class TestKac:

    @pytest.mark.parametrize("word", ["0", "011", "0110"])
    def test_return_mean_uniform(self, monte_carlo_agent, uniform2, word):
        stats = monte_carlo_agent.sample_return(uniform2, parse_pattern(word), 20000, seed=1)
        assert stats.kind == SampleKind.RETURN
        assert stats.capped == 0
        assert abs(stats.kac_scaled - 1.0) < 4 * stats.kac_sigma

    def test_return_mean_markov(self, monte_carlo_agent, markov):
        stats = monte_carlo_agent.sample_return(markov, parse_pattern("011"), 20000, seed=2)
        assert abs(stats.kac_scaled - 1.0) < 4 * stats.kac_sigma


class TestTails:

    def test_hitting_tail_of_single_symbol(self, monte_carlo_agent, uniform2):
        stats = monte_carlo_agent.sample_hitting(uniform2, parse_pattern("0"), 20000, seed=3)
        assert stats.empirical_tail[0] == 1.0
        assert within(stats, [2.0 ** -k for k in range(21)])

    def test_ks_of_single_symbol(self, monte_carlo_agent, uniform2):
        stats = monte_carlo_agent.sample_hitting(uniform2, parse_pattern("0"), 20000, seed=3)
        # the scaled law has no mass below 1/2
        assert stats.ks_stat == pytest.approx(1 - math.exp(-0.5), abs=0.01)
        assert monte_carlo_agent.ks_exponential(stats, 0.5) == stats.ks_stat

    def test_tails_match_sweepout(self, monte_carlo_agent, sweepout_agent, bernoulli):
        pattern = parse_pattern("011")
        series = sweepout_agent.sweepout_series(pattern, bernoulli, 25)
        dist = sweepout_agent.distributions(series)
        hitting = monte_carlo_agent.sample_hitting(bernoulli, pattern, 20000, seed=4)
        returning = monte_carlo_agent.sample_return(bernoulli, pattern, 20000, seed=5)
        assert within(hitting, dist.exact_hitting_tail)
        assert within(returning, dist.exact_return_tail)

    def test_markov_hitting_tail(self, monte_carlo_agent, sweepout_agent, markov):
        pattern = parse_pattern("010")
        series = sweepout_agent.sweepout_series(pattern, markov, 25)
        stats = monte_carlo_agent.sample_hitting(markov, pattern, 20000, seed=6)
        assert within(stats, series.exact_values)

    @pytest.mark.slow
    def test_aperiodic_return_law_at_full_sample(self, monte_carlo_agent, sweepout_agent, uniform2):
        pattern = parse_pattern("000000000001")
        series = sweepout_agent.sweepout_series(pattern, uniform2, 21)
        exact_tail = sweepout_agent.distributions(series).exact_return_tail
        stats = monte_carlo_agent.sample_return(uniform2, pattern, 100000, seed=8)
        assert stats.n_valid == 100000
        assert abs(stats.kac_scaled - 1.0) < 3 * stats.kac_sigma
        assert stats.ks_stat < 0.02
        # no return before the word length
        assert stats.empirical_tail[:12] == [1.0] * 12
        assert within(stats, exact_tail, sigmas=3.0)


class TestLimits:

    def test_step_cap(self, uniform2):
        agent = MonteCarloAgent(jobs=1, batch_size=512)
        agent.cap_factor = 0.5
        stats = agent.sample_hitting(uniform2, parse_pattern("0000000001"), 1000, seed=9)
        assert stats.step_cap == 512
        assert stats.capped > 0
        assert stats.n_valid + stats.capped == 1000
        assert stats.samples.max() <= 512

    @pytest.mark.parametrize("N", [0, -5])
    def test_sample_count(self, monte_carlo_agent, uniform2, N):
        with pytest.raises(UsageError):
            monte_carlo_agent.sample_hitting(uniform2, parse_pattern("0"), N)

    def test_ks_needs_samples(self, monte_carlo_agent):
        with pytest.raises(UsageError):
            monte_carlo_agent.ks_exponential(np.array([]), 0.5)
