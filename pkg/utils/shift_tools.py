from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple, Union

import sympy as sp
from loguru import logger
from pydantic import ValidationError

from models.schemas import (FamilyKind, MeasureSpec, MeasureType, Pattern,
                            PatternFamily, to_fraction)
from utils.errors import (AlphabetMismatchError, FamilyRangeError,
                          MeasureError, UsageError)


# ------------------------------------------------------------------ parsing

def parse_pattern(text: Union[str, Sequence[int], Pattern]) -> Pattern:
    """Read "0120" (one digit per symbol) or a sequence of symbols"""
    if isinstance(text, Pattern):
        return text
    if isinstance(text, str):
        text = text.strip()
        if not text or not text.isdigit():
            raise UsageError(f"pattern must be a non-empty digit string, got {text!r}")
        return Pattern(symbols=tuple(int(c) for c in text))
    return Pattern(symbols=tuple(int(a) for a in text))


def parse_measure(spec: Union[str, Dict, MeasureSpec]) -> MeasureSpec:
    """
    Parse a measure from a CLI token or a JSON object

    Handles:
    - uniform:2
    - bernoulli:0.3,0.7  (or 3/10,7/10)
    - markov:0.9,0.1;0.1,0.9
    - {"type": ..., "q": ..., "p": [...], "P": [[...]]}
    """
    if isinstance(spec, MeasureSpec):
        return spec
    try:
        if isinstance(spec, dict):
            return MeasureSpec.model_validate(spec)
        kind, _, body = spec.strip().partition(':')
        kind = kind.lower()
        if kind == MeasureType.UNIFORM.value:
            return MeasureSpec(type=MeasureType.UNIFORM, q=int(body or 2))
        if kind == MeasureType.BERNOULLI.value:
            p = [to_fraction(x) for x in body.split(',')]
            return MeasureSpec(type=MeasureType.BERNOULLI, q=len(p), p=p)
        if kind == MeasureType.MARKOV.value:
            rows = [[to_fraction(x) for x in row.split(',')] for row in body.split(';')]
            return MeasureSpec(type=MeasureType.MARKOV, q=len(rows), P=rows)
    except (ValidationError, ValueError, ZeroDivisionError) as e:
        raise MeasureError(f"invalid measure {spec!r}: {e}") from e
    raise MeasureError(f"unknown measure type in {spec!r}")


def parse_family(spec: str, l_min: int = 1, l_max: int = None) -> PatternFamily:
    """constant:a | periodic:w | fibonacci | champernowne[:q] | explicit:w1,w2"""
    kind, _, body = spec.strip().partition(':')
    try:
        kind = FamilyKind(kind.lower())
    except ValueError:
        raise UsageError(f"unknown family {spec!r}")
    try:
        if kind == FamilyKind.CONSTANT:
            return PatternFamily(kind=kind, symbol=int(body or 0), l_min=l_min, l_max=l_max)
        if kind == FamilyKind.PERIODIC:
            return PatternFamily(kind=kind, word=parse_pattern(body).symbols,
                                 l_min=l_min, l_max=l_max)
        if kind == FamilyKind.CHAMPERNOWNE:
            return PatternFamily(kind=kind, q=int(body or 2), l_min=l_min, l_max=l_max)
        if kind == FamilyKind.EXPLICIT:
            patterns = [parse_pattern(w) for w in body.split(',')]
            return PatternFamily(kind=kind, patterns=patterns, l_min=l_min,
                                 l_max=l_max)
        return PatternFamily(kind=kind, l_min=l_min, l_max=l_max)
    except ValidationError as e:
        raise UsageError(f"invalid family {spec!r}: {e}") from e


def check_alphabet(pattern: Pattern, q: int):
    if any(a >= q for a in pattern.symbols):
        raise AlphabetMismatchError(
            f"pattern {pattern} uses symbols outside the alphabet 0..{q - 1}")


# ------------------------------------------------------------- probabilities

def initial_weights(measure: MeasureSpec) -> List[Fraction]:
    """Law of the first coordinate"""
    if measure.type == MeasureType.UNIFORM:
        return [Fraction(1, measure.q)] * measure.q
    if measure.type == MeasureType.BERNOULLI:
        return list(measure.p)
    return list(measure.pi)


def transition_weights(measure: MeasureSpec) -> List[List[Fraction]]:
    """Row a: law of the next coordinate after symbol a"""
    if measure.type == MeasureType.MARKOV:
        return [list(row) for row in measure.P]
    return [initial_weights(measure) for _ in range(measure.q)]


def word_measure(word: Sequence[int], measure: MeasureSpec) -> Fraction:
    """Exact measure of the cylinder [word]; the empty word has measure 1"""
    if not word:
        return Fraction(1)
    first = initial_weights(measure)
    steps = transition_weights(measure)
    value = first[word[0]]
    for a, b in zip(word, word[1:]):
        value *= steps[a][b]
    return value


def pattern_measure(pattern: Pattern, measure: MeasureSpec) -> Fraction:
    """mu(A) for the cylinder A = [pattern]"""
    check_alphabet(pattern, measure.q)
    return word_measure(pattern.symbols, measure)


@lru_cache(maxsize=256)
def transition_power(measure: MeasureSpec, n: int) -> Tuple[Tuple[Fraction, ...], ...]:
    """Exact n-step transition matrix"""
    P = sp.Matrix([[sp.Rational(x.numerator, x.denominator) for x in row]
                   for row in transition_weights(measure)])
    Pn = P ** n
    return tuple(tuple(Fraction(int(Pn[i, j].p), int(Pn[i, j].q))
                       for j in range(measure.q)) for i in range(measure.q))


# ------------------------------------------------------------------- periods

def failure_function(symbols: Sequence[int]) -> List[int]:
    """
    KMP failure function

    f[0] = -1; for i > 0, f[i] is the length of the longest proper suffix
    of symbols[:i] that is also a prefix of symbols.
    """
    length = len(symbols)
    f = [0] * (length + 1)
    f[0] = -1
    for i in range(1, length + 1):
        f[i] = f[i - 1]
        while f[i] != -1 and symbols[f[i]] != symbols[i - 1]:
            f[i] = f[f[i]]
        f[i] += 1
    return f


def periods(symbols: Sequence[int]) -> List[int]:
    """Shifts p in 0..l-1 with symbols[i] == symbols[i+p]; 0 always included"""
    length = len(symbols)
    f = failure_function(symbols)
    found = [0]
    border = f[length]
    while border > 0:
        found.append(length - border)
        border = f[border]
    return sorted(found)


def overlap_measure(pattern: Pattern, i: int, measure: MeasureSpec) -> Fraction:
    """mu(A & T^-i A) for i >= 1"""
    if i < 1:
        raise ValueError("overlap shift must be at least 1")
    check_alphabet(pattern, measure.q)
    symbols = pattern.symbols
    length = len(symbols)
    if i < length:
        if any(symbols[j] != symbols[j + i] for j in range(length - i)):
            return Fraction(0)
        return word_measure(symbols[:i] + symbols, measure)

    mu = word_measure(symbols, measure)
    if measure.type != MeasureType.MARKOV:
        return mu * mu
    # bridge of i - l free coordinates between the two copies
    bridge = transition_power(measure, i - length + 1)[symbols[-1]][symbols[0]]
    return mu * bridge * mu / measure.pi[symbols[0]]


# ------------------------------------------------------------------ families

def fibonacci_word(n: int) -> List[int]:
    """Prefix of length n of the fixed point of 0 -> 01, 1 -> 0"""
    word = [0]
    while len(word) < n:
        word = [b for a in word for b in ((0, 1) if a == 0 else (0,))]
    return word[:n]


def champernowne_word(n: int, q: int = 2) -> List[int]:
    """Prefix of length n of 0 1 2 ... written in base q and concatenated"""
    word: List[int] = []
    k = 0
    while len(word) < n:
        digits = []
        m = k
        while True:
            digits.append(m % q)
            m //= q
            if m == 0:
                break
        word.extend(reversed(digits))
        k += 1
    return word[:n]


def family_member(family: PatternFamily, n: int) -> Pattern:
    """n-th member; generated families are indexed by length, explicit ones from 1"""
    if n < family.l_min or n > family.l_max:
        raise FamilyRangeError(
            f"member {n} outside {family.label} range {family.l_min}..{family.l_max}")

    if family.kind == FamilyKind.CONSTANT:
        return Pattern(symbols=(family.symbol,) * n)
    if family.kind == FamilyKind.PERIODIC:
        m = len(family.word)
        return Pattern(symbols=tuple(family.word[i % m] for i in range(n)))
    if family.kind == FamilyKind.FIBONACCI:
        return Pattern(symbols=tuple(fibonacci_word(n)))
    if family.kind == FamilyKind.CHAMPERNOWNE:
        return Pattern(symbols=tuple(champernowne_word(n, family.q)))
    if n > len(family.patterns):
        raise FamilyRangeError(f"explicit family has only {len(family.patterns)} patterns")
    return family.patterns[n - 1]


def family_members(family: PatternFamily) -> List[Tuple[int, Pattern]]:
    members = [(n, family_member(family, n)) for n in range(family.l_min, family.l_max + 1)]
    logger.debug(f"Family {family.label}: {len(members)} members")
    return members
