import math
from fractions import Fraction
from typing import Iterator, List, Optional, Tuple

import numpy as np
from loguru import logger

from models.schemas import AvoidanceAutomaton, MeasureSpec, MeasureType, Pattern
from utils.shift_tools import (check_alphabet, failure_function,
                               initial_weights, transition_weights)


def build_automaton(pattern: Pattern, q: int) -> AvoidanceAutomaton:
    """
    Build the pattern-avoidance automaton

    delta(s, a) is the length of the longest suffix of pattern[:s] + a that
    is a prefix of the pattern; reaching state l means an occurrence.
    """
    check_alphabet(pattern, q)
    symbols = pattern.symbols
    length = len(symbols)
    failure = failure_function(symbols)

    transitions: List[List[int]] = []
    for s in range(length):
        row = []
        for a in range(q):
            if symbols[s] == a:
                row.append(s + 1)
            elif s == 0:
                row.append(0)
            else:
                row.append(transitions[failure[s]][a])
        transitions.append(row)

    return AvoidanceAutomaton(pattern=pattern, q=q, failure=failure, transitions=transitions)


def count_sequence(automaton: AvoidanceAutomaton, n_max: int) -> List[int]:
    """f_A(0..n_max): numbers of words of each length with no occurrence of the pattern"""
    length = automaton.pattern.length
    counts = [0] * length
    counts[0] = 1
    totals = [1]
    for _ in range(n_max):
        nxt = [0] * length
        for s, c in enumerate(counts):
            if c:
                for t in automaton.transitions[s]:
                    if t < length:
                        nxt[t] += c
        counts = nxt
        totals.append(sum(counts))
    return totals


def count_avoiding(automaton: AvoidanceAutomaton, n: int) -> int:
    """Exact number of length-n words over q symbols with no occurrence of the pattern"""
    return count_sequence(automaton, n)[-1]


def counting_matrix(automaton: AvoidanceAutomaton) -> np.ndarray:
    """0/1 transfer matrix of the automaton restricted to non-absorbing states"""
    length = automaton.pattern.length
    C = np.zeros((length, length))
    for s in range(length):
        for t in automaton.transitions[s]:
            if t < length:
                C[s, t] += 1.0
    return C


def spectral_radius(matrix: np.ndarray, tol: float = 1e-12,
                    max_iter: int = 200_000) -> Tuple[float, bool]:
    """
    Dominant eigenvalue of a non-negative matrix via power iteration

    Uses the residual ||A x - lambda x|| as the stopping test. Falls back to
    a dense eigenvalue solve when the iteration does not settle (Jordan
    blocks at the top of the spectrum converge only like 1/n).

    Returns:
        (radius, converged)
    """
    A = np.asarray(matrix, dtype=float).T
    n = A.shape[0]
    x = np.ones(n) / math.sqrt(n)

    for _ in range(max_iter):
        y = A @ x
        y_norm = np.linalg.norm(y)
        if y_norm == 0:
            return 0.0, True
        lam = float(x @ y)
        x = y / y_norm
        res = np.linalg.norm(A @ x - lam * x)
        if res < tol * max(1.0, abs(lam)):
            return float(np.linalg.norm(A @ x)), True

    radius = float(np.max(np.abs(np.linalg.eigvals(A))))
    logger.debug(f"Power iteration did not settle in {max_iter} steps; eigvals gives {radius}")
    return radius, False


class TransferOperator:
    """
    Weighted avoidance transfer operator of a pattern under a measure

    States are automaton states for product measures and
    (automaton state, last symbol) pairs for Markov measures.
    """

    def __init__(self, automaton: AvoidanceAutomaton, measure: MeasureSpec):
        check_alphabet(automaton.pattern, measure.q)
        self.automaton = automaton
        self.measure = measure
        self.q = measure.q
        self.length = automaton.pattern.length
        self.markov = measure.type == MeasureType.MARKOV
        self.n_states = self.length * self.q if self.markov else self.length

        initial = initial_weights(measure)
        steps = transition_weights(measure)
        self.initial_denominator = math.lcm(*(x.denominator for x in initial))
        self.denominator = math.lcm(*(x.denominator for row in steps for x in row))
        self.initial_numerators = [int(x * self.initial_denominator) for x in initial]
        self.step_numerators = [[int(x * self.denominator) for x in row] for row in steps]

        self.matrix = self._float_matrix(steps)

    def index(self, state: int, last: Optional[int]) -> int:
        return state * self.q + last if self.markov else state

    def _float_matrix(self, steps) -> np.ndarray:
        M = np.zeros((self.n_states, self.n_states))
        lasts = range(self.q) if self.markov else [None]
        for s in range(self.length):
            for last in lasts:
                row = steps[last] if self.markov else steps[0]
                for a in range(self.q):
                    t = self.automaton.transitions[s][a]
                    if t < self.length:
                        M[self.index(s, last), self.index(t, a)] += float(row[a])
        return M

    # ------------------------------------------------------------ exact mode

    def _step(self, v: List[int]) -> List[int]:
        nxt = [0] * self.n_states
        delta = self.automaton.transitions
        for idx, weight in enumerate(v):
            if not weight:
                continue
            if self.markov:
                s, last = divmod(idx, self.q)
                row = self.step_numerators[last]
            else:
                s = idx
                row = self.step_numerators[0]
            for a in range(self.q):
                t = delta[s][a]
                if t < self.length:
                    nxt[self.index(t, a)] += weight * row[a]
        return nxt

    def exact_masses(self, n_max: int) -> List[Fraction]:
        """a(n) = mu(no occurrence inside x_0 .. x_{n-1}) for n = 0..n_max"""
        masses = [Fraction(1)]
        if n_max == 0:
            return masses

        if self.markov:
            v = [0] * self.n_states
            for a in range(self.q):
                t = self.automaton.transitions[0][a]
                if t < self.length:
                    v[self.index(t, a)] += self.initial_numerators[a]
            denominator = self.initial_denominator
            masses.append(Fraction(sum(v), denominator))
            n = 1
        else:
            v = [0] * self.n_states
            v[0] = 1
            denominator = 1
            n = 0

        while n < n_max:
            v = self._step(v)
            denominator *= self.denominator
            n += 1
            masses.append(Fraction(sum(v), denominator))
        return masses

    def exact_return_tail(self, k_max: int) -> List[Fraction]:
        """mu_A(tau_A > k) for k = 0..k_max, starting inside the cylinder"""
        state = 0
        for a in self.automaton.pattern.symbols[1:]:
            state = self.automaton.transitions[state][a]
        v = [0] * self.n_states
        v[self.index(state, self.automaton.pattern.symbols[-1])] = 1
        tail = [Fraction(1)]
        denominator = 1
        for _ in range(k_max):
            v = self._step(v)
            denominator *= self.denominator
            tail.append(Fraction(sum(v), denominator))
        return tail

    # ------------------------------------------------------------ float mode

    def _initial_float(self) -> Tuple[np.ndarray, int]:
        v = np.zeros(self.n_states)
        if not self.markov:
            v[0] = 1.0
            return v, 0
        initial = initial_weights(self.measure)
        for a in range(self.q):
            t = self.automaton.transitions[0][a]
            if t < self.length:
                v[self.index(t, a)] += float(initial[a])
        return v, 1

    def log_mass_stream(self, block: int = 32) -> Iterator[np.ndarray]:
        """
        Yield consecutive blocks of log a(n), starting at n = 0

        The state vector is renormalised after every block and the log scale
        is accumulated with compensated summation, so the stream runs for
        millions of steps without underflow.
        """
        stack = [self.matrix]
        for _ in range(block - 1):
            stack.append(stack[-1] @ self.matrix)
        powers = np.stack(stack)

        v, n0 = self._initial_float()
        head = [0.0]
        scale, compensation = 0.0, 0.0
        if n0 == 1:
            total = v.sum()
            scale = math.log(total)
            v = v / total
            head.append(scale)
        yield np.array(head)

        while True:
            masses = np.einsum('s,jst->j', v, powers)
            yield scale + np.log(masses)
            v = v @ powers[-1]
            total = v.sum()
            v = v / total
            increment = math.log(total) - compensation
            updated = scale + increment
            compensation = (updated - scale) - increment
            scale = updated


def sweepout_log_stream(operator: TransferOperator, block: int = 32) -> Iterator[np.ndarray]:
    """Blocks of log s~(k) from k = 0, using s~(k) = a(k + l - 1)"""
    skip = operator.length - 1
    for logs in operator.log_mass_stream(block):
        if skip >= len(logs):
            skip -= len(logs)
            continue
        if skip:
            logs = logs[skip:]
            skip = 0
        yield logs


def collect_log_sweepout(operator: TransferOperator, K: int, block: int = 32) -> np.ndarray:
    """log s~(0..K) as one array"""
    parts = []
    have = 0
    for logs in sweepout_log_stream(operator, block):
        parts.append(logs)
        have += len(logs)
        if have > K:
            break
    return np.concatenate(parts)[:K + 1]
