import math
from collections import defaultdict, deque
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import ValidationError
from scipy import sparse

from models.schemas import (MeasureSpec, MeasureType, Observable,
                            ObservableFamily, ObservableKind,
                            ObservableSummary, Pattern, to_fraction)
from utils.errors import StateBudgetError, UsageError
from utils.shift_tools import (check_alphabet, family_member, initial_weights,
                               transition_weights, word_measure)


def parse_observable(spec: Union[str, Dict, Observable]) -> Observable:
    """
    Read an observable from "word:value,word:value" or a JSON object

    Every word must have the same length, which becomes the depth.
    """
    if isinstance(spec, Observable):
        return spec
    try:
        if isinstance(spec, dict):
            return Observable.model_validate(spec)
        values = {}
        for item in spec.split(','):
            word, _, value = item.strip().partition(':')
            if not value:
                raise UsageError(f"observable entry {item!r} is not word:value")
            values[word.strip()] = to_fraction(value)
        depths = {len(w) for w in values}
        if len(depths) != 1:
            raise UsageError(f"observable words have different lengths {sorted(depths)}")
        return Observable(depth=depths.pop(), values=values)
    except (ValidationError, ValueError, ZeroDivisionError) as e:
        raise UsageError(f"invalid observable {spec!r}: {e}") from e


def indicator_observable(pattern: Pattern) -> Observable:
    return Observable(depth=pattern.length, values={str(pattern): Fraction(1)})


def sibling_pattern(pattern: Pattern, q: int) -> Pattern:
    """Same word with its last symbol advanced by one, mod q"""
    symbols = list(pattern.symbols)
    symbols[-1] = (symbols[-1] + 1) % q
    return Pattern(symbols=tuple(symbols))


def family_observable(family: ObservableFamily, n: int, q: int) -> Observable:
    """f_n = 1 on A_n, plus sibling_value on the sibling cylinder for mixed families"""
    pattern = family_member(family.family, n)
    if family.kind == ObservableKind.INDICATOR:
        return indicator_observable(pattern)
    sibling = sibling_pattern(pattern, q)
    return Observable(depth=pattern.length,
                      values={str(pattern): Fraction(1), str(sibling): family.sibling_value})


def summarize_observable(observable: Observable, measure: MeasureSpec) -> ObservableSummary:
    support = observable.support
    denominator = math.lcm(*(v.denominator for v in support.values()))
    eps = sum((word_measure(_word(w), measure) for w in support), Fraction(0))
    ones = sum((word_measure(_word(w), measure) for w, v in support.items() if v == 1),
               Fraction(0))
    return ObservableSummary(
        depth=observable.depth,
        support_size=len(support),
        denominator=denominator,
        eps_f=eps,
        mu_f_one=ones,
        hypothesis_ratio=ones / eps
    )


def _word(text: str) -> Tuple[int, ...]:
    return tuple(int(c) for c in text)


class WindowAutomaton:
    """
    Aho-Corasick automaton over the support words

    All support words share one length w, so a window is a support word
    exactly when the current node has depth w.
    """

    def __init__(self, words: List[Tuple[int, ...]], q: int):
        self.q = q
        children: List[Dict[int, int]] = [{}]
        self.depth = [0]
        self.label: List[Tuple[int, ...]] = [()]
        for word in words:
            node = 0
            for a in word:
                if a not in children[node]:
                    children.append({})
                    self.depth.append(self.depth[node] + 1)
                    self.label.append(self.label[node] + (a,))
                    children[node][a] = len(children) - 1
                node = children[node][a]

        n_nodes = len(children)
        self.fail = [0] * n_nodes
        self.goto = [[0] * q for _ in range(n_nodes)]
        queue = deque()
        for a in range(q):
            child = children[0].get(a)
            if child is not None:
                self.goto[0][a] = child
                queue.append(child)
        while queue:
            node = queue.popleft()
            for a in range(q):
                child = children[node].get(a)
                if child is not None:
                    self.fail[child] = self.goto[self.fail[node]][a]
                    self.goto[node][a] = child
                    queue.append(child)
                else:
                    self.goto[node][a] = self.goto[self.fail[node]][a]

    @property
    def n_nodes(self) -> int:
        return len(self.depth)


class TaufEngine:
    """
    Weighted product automaton for tau_f = inf{k >= 1: f(T x) + ... + f(T^k x) >= 1}

    States are (window node, last symbol for Markov measures, D * partial sum)
    where D is the common denominator of the observable's values; partial
    sums reaching 1 are absorbed.
    """

    def __init__(self, observable: Observable, measure: MeasureSpec,
                 state_budget: int = 1_000_000):
        support = observable.support
        words = [_word(w) for w in support]
        for word in words:
            check_alphabet(Pattern(symbols=word), measure.q)

        self.observable = observable
        self.measure = measure
        self.q = measure.q
        self.w = observable.depth
        self.markov = measure.type == MeasureType.MARKOV
        self.D = math.lcm(*(v.denominator for v in support.values()))
        self.automaton = WindowAutomaton(words, self.q)
        self.increment = [0] * self.automaton.n_nodes
        for node, label in enumerate(self.automaton.label):
            if len(label) == self.w:
                value = support[''.join(str(a) for a in label)]
                self.increment[node] = int(value * self.D)

        lasts = self.q if self.markov else 1
        self.state_bound = self.automaton.n_nodes * lasts * self.D
        if self.state_bound > state_budget:
            raise StateBudgetError(
                f"tau_f engine needs up to {self.state_bound} states, budget is {state_budget}",
                bound=self.state_bound, budget=state_budget)

        initial = initial_weights(measure)
        steps = transition_weights(measure)
        self.initial_denominator = math.lcm(*(x.denominator for x in initial))
        self.denominator = math.lcm(*(x.denominator for row in steps for x in row))
        self.initial_numerators = [int(x * self.initial_denominator) for x in initial]
        self.step_numerators = [[int(x * self.denominator) for x in row] for row in steps]
        self.support_measure = sum((word_measure(w, measure) for w in words), Fraction(0))
        logger.debug(f"tau_f engine: {self.automaton.n_nodes} nodes, D={self.D}, "
                     f"state bound {self.state_bound}")

    # ------------------------------------------------------------- stepping

    def _advance(self, states: Dict[tuple, int], t: int, count_from: int,
                 condition_window: Optional[int]) -> Dict[tuple, int]:
        """Read symbol number t (1-based); window t - w completes"""
        goto = self.automaton.goto
        depth = self.automaton.depth
        j = t - self.w
        nxt: Dict[tuple, int] = defaultdict(int)
        for (node, last, r), weight in states.items():
            if t == 1:
                row = self.initial_numerators
            else:
                row = self.step_numerators[last if self.markov else 0]
            for a in range(self.q):
                node2 = goto[node][a]
                r2 = r
                if j >= 0:
                    complete = depth[node2] == self.w
                    if j == condition_window and not complete:
                        continue
                    if complete and j >= count_from:
                        r2 += self.increment[node2]
                        if r2 >= self.D:
                            continue
                nxt[(node2, a if self.markov else 0, r2)] += weight * row[a]
        return nxt

    def _check_modes(self, count_from: int, condition_window: Optional[int]):
        if count_from not in (0, 1) or condition_window not in (None, 0, 1):
            raise UsageError("tau_f engine counts from window 0 or 1 and conditions on window 0 or 1")
        if condition_window is not None and count_from < condition_window:
            raise UsageError("conditioning window must not come after the first counted window")

    def _warm_up(self, count_from: int, condition_window: Optional[int],
                 horizon: int):
        """Exact steps until the per-step rule is time-homogeneous, recording masses"""
        states: Dict[tuple, int] = {(0, 0, 0): 1}
        denominator = 1
        masses: List[Fraction] = []
        for t in range(1, horizon + 1):
            states = self._advance(states, t, count_from, condition_window)
            denominator *= self.initial_denominator if t == 1 else self.denominator
            j = t - self.w
            if j >= 0:
                masses.append(Fraction(sum(states.values()), denominator))
        return states, denominator, masses

    def exact_tail(self, K: int, count_from: int = 1,
                   condition_window: Optional[int] = None) -> List[Fraction]:
        """
        mu(C & sum_{j=count_from..k} f(window j) < 1) for k = 0..K

        C is the whole space, or {window c is a support word} for c = condition_window.
        """
        self._check_modes(count_from, condition_window)
        _, _, masses = self._warm_up(count_from, condition_window, K + self.w)
        if condition_window:
            masses[:condition_window] = [self.support_measure] * condition_window
        return masses

    def _state_index(self, node: int, last: int, r: int) -> int:
        lasts = self.q if self.markov else 1
        return (node * lasts + last) * self.D + r

    def _homogeneous_matrix(self) -> sparse.csr_matrix:
        """Transpose of the one-step matrix once every completed window is counted"""
        goto = self.automaton.goto
        depth = self.automaton.depth
        lasts = self.q if self.markov else 1
        rows, cols, data = [], [], []
        for node in range(self.automaton.n_nodes):
            for last in range(lasts):
                row = self.step_numerators[last]
                for r in range(self.D):
                    source = self._state_index(node, last, r)
                    for a in range(self.q):
                        node2 = goto[node][a]
                        r2 = r + (self.increment[node2] if depth[node2] == self.w else 0)
                        if r2 >= self.D:
                            continue
                        rows.append(self._state_index(node2, a if self.markov else 0, r2))
                        cols.append(source)
                        data.append(row[a] / self.denominator)
        n = self.state_bound
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    def float_stream(self, count_from: int = 1, condition_window: Optional[int] = None,
                     block: int = 256) -> Iterator[np.ndarray]:
        """Blocks of the same tail in floats, k = 0, 1, 2, ... without end"""
        self._check_modes(count_from, condition_window)
        start = self.w + max(count_from, condition_window or 0)
        states, denominator, masses = self._warm_up(count_from, condition_window, start)
        if condition_window:
            masses[:condition_window] = [self.support_measure] * condition_window
        yield np.array([float(m) for m in masses])

        v = np.zeros(self.state_bound)
        for (node, last, r), weight in states.items():
            v[self._state_index(node, last, r)] += float(Fraction(weight, denominator))
        MT = self._homogeneous_matrix()
        while True:
            out = np.empty(block)
            for i in range(block):
                v = MT @ v
                out[i] = v.sum()
            yield out


def collect_stream(stream: Iterator[np.ndarray], K: int) -> np.ndarray:
    parts, have = [], 0
    for values in stream:
        parts.append(values)
        have += len(values)
        if have > K:
            break
    return np.concatenate(parts)[:K + 1]
