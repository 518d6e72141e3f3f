import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from agents import SweepoutAgent
from models.schemas import ArithmeticMode, Pattern
from utils.automaton import (TransferOperator, build_automaton,
                             collect_log_sweepout, count_sequence,
                             counting_matrix, spectral_radius)
from utils.errors import UsageError
from utils.shift_tools import parse_measure, parse_pattern

from conftest import brute_count, brute_sweepout


def all_patterns(q: int, max_length: int):
    for l in range(1, max_length + 1):
        for symbols in itertools.product(range(q), repeat=l):
            yield Pattern(symbols=symbols)


class TestAutomaton:

    def test_transitions_of_11(self):
        automaton = build_automaton(parse_pattern("11"), 2)
        assert automaton.transitions == [[0, 1], [0, 2]]

    def test_transitions_fall_back_along_borders(self):
        automaton = build_automaton(parse_pattern("0101"), 2)
        # after "010" a 0 leaves the border "0"
        assert automaton.transitions[3] == [1, 4]
        assert automaton.transitions[2] == [3, 0]

    def test_counting_matrix_rows(self):
        C = counting_matrix(build_automaton(parse_pattern("00"), 2))
        assert C.tolist() == [[1.0, 1.0], [1.0, 0.0]]

    def test_spectral_radius_of_fibonacci_matrix(self):
        radius, converged = spectral_radius(np.array([[1.0, 1.0], [1.0, 0.0]]))
        assert converged
        assert radius == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-12)

    def test_spectral_radius_of_jordan_block_falls_back(self):
        radius, converged = spectral_radius(np.array([[1.0, 1.0], [0.0, 1.0]]), max_iter=500)
        assert not converged
        assert radius == pytest.approx(1.0, abs=1e-9)


class TestCounting:

    def test_fibonacci_count(self, sweepout_agent):
        assert sweepout_agent.count_avoiding(parse_pattern("00"), 2, 10) == 144

    def test_negative_length(self, sweepout_agent):
        with pytest.raises(UsageError):
            sweepout_agent.count_avoiding(parse_pattern("00"), 2, -1)

    @pytest.mark.parametrize("q,max_length,n_max", [(2, 4, 12), (3, 3, 7)])
    def test_brute_force_oracle(self, q, max_length, n_max):
        for pattern in all_patterns(q, max_length):
            counts = count_sequence(build_automaton(pattern, q), n_max)
            expected = [brute_count(pattern.symbols, q, n) for n in range(n_max + 1)]
            assert counts == expected, str(pattern)

    def test_short_words_never_contain_the_pattern(self, sweepout_agent):
        pattern = parse_pattern("0110")
        for n in range(4):
            assert sweepout_agent.count_avoiding(pattern, 2, n) == 2 ** n


class TestSweepout:

    def test_exact_series_of_11(self, sweepout_agent, uniform2):
        series = sweepout_agent.sweepout_series(parse_pattern("11"), uniform2, 3)
        assert series.exact_values == [Fraction(1), Fraction(3, 4), Fraction(5, 8), Fraction(1, 2)]
        assert series.mu_A == Fraction(1, 4)
        assert series.is_exact

    def test_single_symbol_is_geometric(self, sweepout_agent, uniform2):
        series = sweepout_agent.sweepout_series(parse_pattern("0"), uniform2, 20)
        assert series.exact_values == [Fraction(1, 2 ** k) for k in range(21)]

    @pytest.mark.parametrize("word", ["01", "110", "0100"])
    def test_brute_force_markov(self, sweepout_agent, markov, word):
        pattern = parse_pattern(word)
        series = sweepout_agent.sweepout_series(pattern, markov, 6)
        assert series.exact_values == [brute_sweepout(pattern.symbols, markov, k)
                                       for k in range(7)]

    @pytest.mark.parametrize("word", ["1", "01", "011"])
    def test_brute_force_bernoulli(self, sweepout_agent, bernoulli, word):
        pattern = parse_pattern(word)
        series = sweepout_agent.sweepout_series(pattern, bernoulli, 6)
        assert series.exact_values == [brute_sweepout(pattern.symbols, bernoulli, k)
                                       for k in range(7)]

    def test_float_matches_exact(self, sweepout_agent, markov):
        pattern = parse_pattern("0110")
        exact = sweepout_agent.sweepout_series(pattern, markov, 300, exact=True)
        floats = sweepout_agent.sweepout_series(pattern, markov, 300, exact=False)
        assert floats.mode == ArithmeticMode.FLOAT
        assert floats.exact_values is None
        expected = np.array([float(x) for x in exact.exact_values])
        np.testing.assert_allclose(floats.values, expected, rtol=1e-11)

    def test_log_stream_survives_underflow(self, uniform2):
        operator = TransferOperator(build_automaton(parse_pattern("0"), 2), uniform2)
        logs = collect_log_sweepout(operator, 5000, block=32)
        assert len(logs) == 5001
        assert logs[-1] == pytest.approx(-5000 * math.log(2), rel=1e-12)

    def test_exact_stops_at_k_exact(self, uniform2):
        agent = SweepoutAgent(k_exact=10)
        series = agent.sweepout_series(parse_pattern("01"), uniform2, 20, exact=True)
        assert series.exact_through == 10
        assert len(series.exact_values) == 11
        assert not series.is_exact
        assert len(series.values) == 21

    def test_negative_K(self, sweepout_agent, uniform2):
        with pytest.raises(UsageError):
            sweepout_agent.sweepout_series(parse_pattern("0"), uniform2, -1)


class TestDistributions:

    def test_return_tail_and_c_of_11(self, sweepout_agent, uniform2):
        series = sweepout_agent.sweepout_series(parse_pattern("11"), uniform2, 3)
        dist = sweepout_agent.distributions(series)
        assert dist.exact_return_tail == [Fraction(1), Fraction(1, 2), Fraction(1, 2)]
        assert dist.exact_c == [Fraction(0), Fraction(1, 4), Fraction(1, 8)]
        assert dist.exact_sup_c == Fraction(1, 4)

    def test_c_vanishes_for_single_symbol(self, sweepout_agent, uniform2):
        series = sweepout_agent.sweepout_series(parse_pattern("0"), uniform2, 30)
        dist = sweepout_agent.distributions(series)
        assert all(c == 0 for c in dist.exact_c)

    def test_needs_two_terms(self, sweepout_agent, uniform2):
        series = sweepout_agent.sweepout_series(parse_pattern("0"), uniform2, 0)
        with pytest.raises(UsageError):
            sweepout_agent.distributions(series)


class TestIdentities:

    @pytest.mark.parametrize("word", ["11", "0110", "0100101001"])
    def test_uniform(self, sweepout_agent, uniform2, word):
        series = sweepout_agent.sweepout_series(parse_pattern(word), uniform2, 256)
        report = sweepout_agent.check_identities(series)
        assert report.return_identity_residual == 0
        assert report.recursion_residual == 0
        assert report.convolution_residual == 0
        assert report.uniform_bridge_residual == 0
        assert report.monotone
        assert report.lower_bound_holds
        assert report.kac_bracket_holds

    @pytest.mark.parametrize("measure", ["markov:0.9,0.1;0.1,0.9", "bernoulli:1/5,3/10,1/2"])
    def test_non_uniform(self, sweepout_agent, measure):
        m = parse_measure(measure)
        series = sweepout_agent.sweepout_series(parse_pattern("010"), m, 256)
        report = sweepout_agent.check_identities(series)
        assert report.return_identity_residual == 0
        assert report.recursion_residual == 0
        assert report.convolution_residual == 0
        assert report.uniform_bridge_residual is None
        assert report.kac_bracket_holds

    def test_kac_partial_sum_approaches_inverse_measure(self, sweepout_agent, uniform2):
        series = sweepout_agent.sweepout_series(parse_pattern("011"), uniform2, 400)
        report = sweepout_agent.check_identities(series)
        assert report.kac_target == 8.0
        assert report.kac_partial_sum == pytest.approx(8.0, abs=1e-9)

    def test_tampered_series_fails_recursion(self, sweepout_agent, uniform2):
        series = sweepout_agent.sweepout_series(parse_pattern("0110"), uniform2, 20)
        values = list(series.exact_values)
        values[5] += Fraction(1, 1000)
        tampered = series.model_copy(update={"exact_values": values})
        report = sweepout_agent.check_identities(tampered)
        assert report.recursion_residual == pytest.approx(0.001)
        assert report.convolution_residual == pytest.approx(0.001)
        assert report.return_identity_residual > 0

    def test_needs_exact_series(self, sweepout_agent, uniform2):
        series = sweepout_agent.sweepout_series(parse_pattern("11"), uniform2, 10, exact=False)
        with pytest.raises(UsageError):
            sweepout_agent.check_identities(series)
