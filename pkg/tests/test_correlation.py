import itertools
import math
from fractions import Fraction

import pytest

from models.schemas import Pattern
from utils.automaton import build_automaton, count_sequence
from utils.correlation_tools import (correlation_polynomial, g_at_one,
                                     gf_coefficients, ratio_closed_limit,
                                     root_expansion)
from utils.errors import ClosedFormUnavailableError, SeriesTooShortError
from utils.shift_tools import parse_family, parse_pattern

GOLDEN = (1 + math.sqrt(5)) / 2


def corpus():
    patterns = [Pattern(symbols=s) for l in range(1, 6)
                for s in itertools.product(range(2), repeat=l)]
    patterns += [parse_pattern(w) for w in ("010010", "011011", "000001", "101101")]
    return patterns


class TestCorrelationPolynomial:

    def test_coefficients_are_indexed_by_power(self):
        assert correlation_polynomial(parse_pattern("11")).coefficients == [1, 1]
        assert correlation_polynomial(parse_pattern("100")).coefficients == [0, 0, 1]
        # periods 0, 5, 8 of the Fibonacci prefix give z^9 + z^4 + z
        corr = correlation_polynomial(parse_pattern("0100101001"))
        assert corr.periods == [0, 5, 8]
        assert [i for i, c in enumerate(corr.coefficients) if c] == [1, 4, 9]

    def test_generating_function_matches_counts(self):
        for pattern in corpus():
            counts = count_sequence(build_automaton(pattern, 2), 30)
            assert gf_coefficients(correlation_polynomial(pattern), 2, 30) == counts, str(pattern)

    @pytest.mark.parametrize("word", ["0", "12", "010", "2102"])
    def test_generating_function_ternary(self, word):
        pattern = parse_pattern(word)
        counts = count_sequence(build_automaton(pattern, 3), 20)
        assert gf_coefficients(correlation_polynomial(pattern), 3, 20) == counts

    def test_uniform_bridge(self, sweepout_agent, uniform2):
        pattern = parse_pattern("0110")
        l = pattern.length
        counts = gf_coefficients(correlation_polynomial(pattern), 2, 60 + l)
        series = sweepout_agent.sweepout_series(pattern, uniform2, 60)
        assert series.exact_values == [Fraction(counts[k + l - 1], 2 ** (k + l - 1))
                                       for k in range(61)]

    def test_expansion_and_limit(self):
        corr = correlation_polynomial(parse_pattern("11"))
        assert root_expansion(corr, 2) == Fraction(44, 27)
        assert ratio_closed_limit(corr, 2) == Fraction(2, 3)
        aperiodic = correlation_polynomial(parse_pattern("0000000001"))
        assert ratio_closed_limit(aperiodic, 2) == 1


class TestDominantRoot:

    def test_golden_ratio(self, escape_agent):
        result = escape_agent.dominant_root(parse_pattern("11"), 2)
        assert result.method == "bisection_newton"
        assert result.root == pytest.approx(GOLDEN, abs=1e-12)
        assert result.mismatch < 1e-9

    @pytest.mark.parametrize("word", ["0", "1"])
    def test_boundary_root(self, escape_agent, word):
        corr = correlation_polynomial(parse_pattern(word))
        assert g_at_one(corr, 2) == 0
        result = escape_agent.dominant_root(parse_pattern(word), 2)
        assert result.method == "boundary"
        assert result.root == 1.0

    def test_root_below_alphabet_size(self, escape_agent):
        for word in ("0110", "0100101001", "000000000001"):
            result = escape_agent.dominant_root(parse_pattern(word), 2)
            assert 1.0 < result.root < 2.0
            assert abs(result.root - result.spectral_radius) < 1e-9


class TestEscapeRate:

    def test_closed_form_for_11(self, escape_agent, uniform2):
        report = escape_agent.escape_rate(parse_pattern("11"), uniform2, K=512)
        assert report.rho_closed == pytest.approx(math.log(2) - math.log(GOLDEN), abs=1e-12)
        assert report.rho == report.rho_closed
        assert report.root_expansion_error == pytest.approx(abs(44 / 27 - GOLDEN), abs=1e-12)

    def test_single_symbol_ratio(self, escape_agent, uniform2):
        report = escape_agent.escape_rate(parse_pattern("0"), uniform2, K=128)
        assert report.rho == pytest.approx(math.log(2), abs=1e-12)
        assert report.ratio == pytest.approx(2 * math.log(2), abs=1e-12)

    @pytest.mark.parametrize("word", ["0110", "00010111", "010011000111"])
    def test_closed_form_agrees_with_fit(self, escape_agent, uniform2, word):
        report = escape_agent.escape_rate(parse_pattern(word), uniform2, K=4096)
        assert abs(report.rho_closed - report.rho_fit) < 1e-6
        assert abs(report.rho_closed - report.rho_spectral) < 1e-9

    def test_non_uniform_uses_spectral_rate(self, escape_agent, markov):
        report = escape_agent.escape_rate(parse_pattern("011"), markov, K=2048)
        assert report.rho_closed is None
        assert report.root is None
        assert report.rho == report.rho_spectral
        assert abs(report.rho_spectral - report.rho_fit) < 1e-6

    def test_closed_form_unavailable(self, escape_agent, bernoulli):
        with pytest.raises(ClosedFormUnavailableError):
            escape_agent.escape_rate(parse_pattern("01"), bernoulli, K=128, closed_form=True)

    def test_series_too_short(self, escape_agent, uniform2):
        with pytest.raises(SeriesTooShortError) as info:
            escape_agent.escape_rate(parse_pattern("01"), uniform2, K=10)
        assert info.value.required_k == 64


class TestRatioStudy:

    def test_constant_family_limit(self, escape_agent, uniform2):
        family = parse_family("constant:0", 8, 20)
        study = escape_agent.ratio_study(family, uniform2, K=1024)
        assert study.period == 1
        assert abs(study.measured_limit - 0.5) < 1e-3
        assert study.predicted_limit == 0.5
        assert study.stated_limit == 1.5
        assert study.discrepancy is True

    def test_fibonacci_ratio_approaches_one(self, escape_agent, uniform2):
        family = parse_family("fibonacci", 8, 20)
        study = escape_agent.ratio_study(family, uniform2, K=1024)
        assert study.period is None
        assert abs(study.reports[-1].ratio - 1.0) < 1e-3
        assert len(study.reports) == 13

    def test_aperiodic_family_tends_to_exponential(self, escape_agent, uniform2):
        words = ",".join("0" * (l - 1) + "1" for l in range(8, 17))
        study = escape_agent.ratio_study(parse_family(f"explicit:{words}"), uniform2, K=4096)
        assert [r.l for r in study.reports] == list(range(8, 17))
        assert study.sup_dev_monotone
        assert study.reports[-1].sup_dev_exp < 0.02

    def test_fibonacci_sup_deviation(self, escape_agent, uniform2):
        study = escape_agent.ratio_study(parse_family("fibonacci", 8, 16), uniform2, K=4096)
        assert study.reports[-1].l == 16
        assert study.reports[-1].sup_dev_exp < 0.02
