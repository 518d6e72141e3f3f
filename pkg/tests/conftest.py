import itertools
from fractions import Fraction

import pytest

from agents import (EscapeRateAgent, LaplaceAgent, MixingAgent,
                    MonteCarloAgent, ObservableAgent, SweepoutAgent)
from utils.shift_tools import parse_measure, parse_pattern, word_measure


def contains(word, pattern) -> bool:
    l = len(pattern)
    return any(tuple(word[i:i + l]) == tuple(pattern) for i in range(len(word) - l + 1))


def brute_count(pattern, q: int, n: int) -> int:
    """Words of length n over q symbols with no occurrence of the pattern"""
    return sum(1 for word in itertools.product(range(q), repeat=n)
               if not contains(word, pattern))


def brute_sweepout(pattern, measure, k: int) -> Fraction:
    """mu(no occurrence starting at 0..k-1) by summing cylinders of length k+l-1"""
    n = k + len(pattern) - 1
    return sum((word_measure(word, measure)
                for word in itertools.product(range(measure.q), repeat=n)
                if not contains(word, pattern)), Fraction(0))


@pytest.fixture
def uniform2():
    return parse_measure("uniform:2")


@pytest.fixture
def uniform3():
    return parse_measure("uniform:3")


@pytest.fixture
def bernoulli():
    return parse_measure("bernoulli:3/10,7/10")


@pytest.fixture
def markov():
    return parse_measure("markov:0.9,0.1;0.1,0.9")


@pytest.fixture
def aperiodic10():
    return parse_pattern("0000000001")


@pytest.fixture
def sweepout_agent():
    return SweepoutAgent()


@pytest.fixture
def escape_agent(sweepout_agent):
    return EscapeRateAgent(sweepout_agent)


@pytest.fixture
def laplace_agent(sweepout_agent):
    return LaplaceAgent(sweepout_agent)


@pytest.fixture
def mixing_agent(sweepout_agent, escape_agent):
    return MixingAgent(sweepout_agent, escape_agent)


@pytest.fixture
def monte_carlo_agent():
    return MonteCarloAgent(jobs=1, batch_size=2048)


@pytest.fixture
def observable_agent():
    return ObservableAgent()
