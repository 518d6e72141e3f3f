import math
from fractions import Fraction

import pytest

from agents import ObservableAgent
from models.schemas import ObservableFamily, ObservableKind
from utils.errors import StateBudgetError, UsageError
from utils.observable_tools import (family_observable, indicator_observable,
                                    parse_observable, sibling_pattern)
from utils.shift_tools import parse_family, parse_pattern

MIXED = "00:1,01:1/2"


class TestParsing:

    def test_string_form(self):
        observable = parse_observable(MIXED)
        assert observable.depth == 2
        assert observable.values == {"00": Fraction(1), "01": Fraction(1, 2)}

    def test_json_form(self):
        observable = parse_observable({"depth": 3, "values": {"011": "0.25", "111": 1}})
        assert observable.support == {"011": Fraction(1, 4), "111": Fraction(1)}

    @pytest.mark.parametrize("spec", ["0:1,01:1", "01", "01:3/2", "01:0", "0x:1"])
    def test_invalid(self, spec):
        with pytest.raises(UsageError):
            parse_observable(spec)

    def test_family_members(self):
        family = ObservableFamily(kind=ObservableKind.MIXED,
                                  family=parse_family("constant:1", 2, 4))
        observable = family_observable(family, 3, 2)
        assert observable.values == {"111": Fraction(1), "110": Fraction(1, 4)}
        assert str(sibling_pattern(parse_pattern("012"), 3)) == "010"


class TestSummary:

    def test_mixed_uniform(self, observable_agent, uniform2):
        summary = observable_agent.summary(parse_observable(MIXED), uniform2)
        assert summary.support_size == 2
        assert summary.denominator == 2
        assert summary.eps_f == Fraction(1, 2)
        assert summary.mu_f_one == Fraction(1, 4)
        assert summary.hypothesis_ratio == Fraction(1, 2)

    def test_indicator_ratio_is_one(self, observable_agent, markov):
        summary = observable_agent.summary(indicator_observable(parse_pattern("011")), markov)
        assert summary.hypothesis_ratio == 1
        assert summary.eps_f == Fraction(9, 200)


class TestTaufSeries:

    @pytest.mark.parametrize("word", ["11", "0110", "010"])
    def test_indicator_matches_sweepout(self, observable_agent, sweepout_agent, markov, word):
        pattern = parse_pattern(word)
        tauf = observable_agent.exact_tauf_series(indicator_observable(pattern), markov, 40)
        series = sweepout_agent.sweepout_series(pattern, markov, 40)
        assert tauf.exact_values == series.exact_values

    def test_mixed_by_hand(self, observable_agent, uniform2):
        # only a 00 window reaches 1 by itself; two 01 windows cannot be adjacent
        tauf = observable_agent.exact_tauf_series(parse_observable(MIXED), uniform2, 2)
        assert tauf.exact_values == [1, Fraction(3, 4), Fraction(5, 8)]

    def test_float_matches_exact(self, observable_agent, markov):
        observable = parse_observable("010:1,110:1/3")
        exact = observable_agent.exact_tauf_series(observable, markov, 200)
        floats = observable_agent.exact_tauf_series(observable, markov, 200, exact=False)
        assert floats.exact_values is None
        for a, b in zip(exact.values, floats.values):
            assert b == pytest.approx(a, rel=1e-10, abs=1e-300)

    def test_monotone(self, observable_agent, uniform3):
        tauf = observable_agent.exact_tauf_series(parse_observable("12:1/3,20:2/3"), uniform3, 60)
        values = tauf.exact_values
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_state_budget(self, uniform2):
        agent = ObservableAgent(state_budget=4)
        with pytest.raises(StateBudgetError) as info:
            agent.exact_tauf_series(parse_observable("0110:1"), uniform2, 10)
        assert info.value.bound == 5
        assert info.value.to_dict()["budget"] == 4

    def test_negative_K(self, observable_agent, uniform2):
        with pytest.raises(UsageError):
            observable_agent.exact_tauf_series(parse_observable(MIXED), uniform2, -1)


class TestTaufIdentity:

    @pytest.mark.parametrize("spec", ["0:1", "1:1/2", "00:1,01:1/2", "11:1/3,10:1/2"])
    def test_uniform(self, observable_agent, uniform2, spec):
        report = observable_agent.tauf_identity_check(parse_observable(spec), uniform2, 40)
        assert report.residual == 0
        assert report.k0_consistent

    def test_markov(self, observable_agent, markov):
        report = observable_agent.tauf_identity_check(parse_observable("01:1,11:1/4"), markov, 256)
        assert report.residual == 0


class TestTaufLaplace:

    def test_formula_matches_direct_sums(self, uniform2):
        agent = ObservableAgent(tol=1e-12)
        points = agent.tauf_laplace(parse_observable("011:1,010:1/2"), uniform2, [0.5, 1.0, 2.0])
        for point in points:
            assert point.phi_hitting == pytest.approx(point.phi_hitting_direct, abs=1e-9)
            assert point.phi_return == pytest.approx(point.phi_return_direct, abs=1e-8)
            assert point.target == pytest.approx(point.t / (point.t + 1))

    def test_indicator_agrees_with_cylinder(self, uniform2, laplace_agent):
        agent = ObservableAgent(tol=1e-12)
        pattern = parse_pattern("0110")
        points = agent.tauf_laplace(indicator_observable(pattern), uniform2, [1.0])
        report = laplace_agent.report(pattern, uniform2, [1.0], tol=1e-12)
        assert points[0].phi_hitting == pytest.approx(report.points[0].phi_hitting, abs=1e-9)
        assert points[0].phi_return == pytest.approx(report.points[0].phi_return, abs=1e-8)

    def test_rejects_non_positive_t(self, observable_agent, uniform2):
        with pytest.raises(UsageError):
            observable_agent.tauf_laplace(parse_observable(MIXED), uniform2, [1.0, 0.0])


class TestTaufSampling:

    def test_samples_follow_exact_tail(self, monte_carlo_agent, observable_agent, uniform2):
        observable = parse_observable("011:1,010:1/2")
        exact = observable_agent.exact_tauf_series(observable, uniform2, 25)
        stats = monte_carlo_agent.sample_tauf(observable, uniform2, 20000, seed=12)
        assert stats.mu == 0.25
        for k, empirical in zip(stats.tail_k, stats.empirical_tail):
            p = exact.values[k]
            sigma = max(math.sqrt(p * (1 - p) / stats.n_valid), 1 / stats.n_valid)
            assert abs(empirical - p) <= 5 * sigma + 1e-12


class TestTaufStudy:

    def test_indicator_family(self, observable_agent, uniform2):
        family = ObservableFamily(kind=ObservableKind.INDICATOR,
                                  family=parse_family("fibonacci", 4, 7))
        study = observable_agent.tauf_limit_study(family, uniform2, [1.0, 2.0])
        assert [row.n for row in study.rows] == [4, 5, 6, 7]
        assert all(row.hypothesis_ratio == 1.0 for row in study.rows)
        assert study.rows[-1].eps_f == 2.0 ** -7

    def test_mixed_family(self, observable_agent, uniform2):
        family = ObservableFamily(kind=ObservableKind.MIXED,
                                  family=parse_family("periodic:01", 4, 6))
        study = observable_agent.tauf_limit_study(family, uniform2, [1.0])
        for row in study.rows:
            assert row.hypothesis_ratio == pytest.approx(0.5)
            assert row.eps_f == pytest.approx(2 * 2.0 ** -row.n)
