import itertools
import math
from fractions import Fraction
from typing import List, Sequence, Tuple, Union

from loguru import logger

from models.schemas import MeasureSpec, MeasureType, Pattern, PsiCertificate
from utils.shift_tools import overlap_measure, transition_weights, word_measure

Number = Union[Fraction, float]


def _matmul(A: List[List[Fraction]], B: List[List[Fraction]]) -> List[List[Fraction]]:
    n = len(A)
    return [[sum((A[i][k] * B[k][j] for k in range(n)), Fraction(0)) for j in range(n)]
            for i in range(n)]


def psi_coefficients(measure: MeasureSpec, k_max: int) -> List[Fraction]:
    """
    psi_k for k = 0..k_max, exact

    A gap of k coordinates between two cylinders spans k + 1 transitions,
    so psi_k = max_{a,b} |(P^{k+1})_{ab} / pi_b - 1|. Product measures give 0.
    """
    if measure.type != MeasureType.MARKOV:
        return [Fraction(0)] * (k_max + 1)
    P = transition_weights(measure)
    pi = measure.pi
    power = P
    psi = []
    for _ in range(k_max + 1):
        psi.append(max(abs(power[a][b] / pi[b] - 1)
                       for a in range(measure.q) for b in range(measure.q)))
        power = _matmul(power, P)
    return psi


def certify_psi(measure: MeasureSpec, psi: Sequence[Fraction], n_max: int = 3,
                m_max: int = 3, k_max: int = 4) -> PsiCertificate:
    """
    Exhaustive check of |mu(A & T^-(k+n) B) - mu(A) mu(B)| <= psi_k mu(A) mu(B)

    A and B run over all cylinders of lengths up to n_max and m_max, and the
    joint measure is summed over every gap word of length k.
    """
    q = measure.q
    checked = 0
    violations = 0
    worst = None
    words = {n: list(itertools.product(range(q), repeat=n))
             for n in range(0, max(n_max, m_max, k_max) + 1)}
    measures = {}

    def mu(word):
        if word not in measures:
            measures[word] = word_measure(word, measure)
        return measures[word]

    for k in range(min(k_max, len(psi) - 1) + 1):
        for n in range(1, n_max + 1):
            for A in words[n]:
                for m in range(1, m_max + 1):
                    for B in words[m]:
                        joint = sum((mu(A + g + B) for g in words[k]), Fraction(0))
                        product = mu(A) * mu(B)
                        excess = abs(joint - product) / product - psi[k]
                        checked += 1
                        if excess > 0:
                            violations += 1
                        worst = excess if worst is None else max(worst, excess)

    logger.debug(f"psi certificate for {measure.label}: {checked} cases, {violations} violations")
    return PsiCertificate(checked=checked, violations=violations,
                          worst_ratio=float(worst), passed=violations == 0)


def least_mixing_gap(psi: Sequence[Fraction], epsilon: Fraction):
    """Least ell with psi_ell < epsilon, or None within the profile"""
    for ell, value in enumerate(psi):
        if value < epsilon:
            return ell
    return None


def overlap_sup(pattern: Pattern, measure: MeasureSpec, mu: Fraction) -> Fraction:
    """sup_{1<=i<=l} mu(A & T^-i A) / mu(A)"""
    return max(overlap_measure(pattern, i, measure) / mu for i in range(1, pattern.length + 1))


def upper_q(w: int, mu: Fraction, psi_ell: Fraction) -> Fraction:
    """q_A = 1 - w mu (1 + psi_ell + 2 w mu)"""
    return 1 - w * mu * (1 + psi_ell + 2 * w * mu)


def upper_steps(values: Sequence[Number], w: int, q_A: Number,
                tolerance: float = 0.0) -> Tuple[int, bool, float]:
    """s~(m w) >= q_A s~((m-1) w) for every m with m w <= K"""
    checked = 0
    worst = None
    for m in range(1, (len(values) - 1) // w + 1):
        slack = values[m * w] - q_A * values[(m - 1) * w]
        worst = slack if worst is None else min(worst, slack)
        checked += 1
    worst = float(worst) if worst is not None else 0.0
    return checked, worst >= -tolerance, worst


def lower_argument(k: int, w: int, mu: Fraction, epsilon: Fraction,
                   psi_ell: Fraction, psi_max: Fraction) -> Fraction:
    """k w mu (1 - eps - k eps (1 + psi_max)) (1 - psi_ell)"""
    return inclusion_exclusion_estimate(k, w, mu, epsilon, psi_max) * (1 - psi_ell)


def inclusion_exclusion_estimate(k: int, w: int, mu: Fraction, epsilon: Fraction,
                                 psi_max: Fraction) -> Fraction:
    """Lower estimate k w mu (1 - eps - k eps (1 + psi_max)) for mu(A^{k w})"""
    return k * w * mu * (1 - epsilon - k * epsilon * (1 + psi_max))


def lower_bound_value(x: Fraction, k: int, w: int) -> Tuple[float, bool]:
    """-log(1 - x) / ((k+1) w), or (0, vacuous) outside 0 < x < 1"""
    if x <= 0 or x >= 1:
        return 0.0, True
    return -math.log1p(-float(x)) / ((k + 1) * w), False


def lower_steps(values: Sequence[Number], k: int, w: int, p_hat: Number,
                tolerance: float = 0.0) -> Tuple[int, bool]:
    """s~(m (k+1) w) <= s~((k+1) w) p_hat^(m-1) for every admissible m"""
    block = (k + 1) * w
    checked = 0
    holds = True
    for m in range(1, (len(values) - 1) // block + 1):
        if values[m * block] > values[block] * p_hat ** (m - 1) + tolerance:
            holds = False
        checked += 1
    return checked, holds


def subadditivity(values: Sequence[Number], n: int, psi_max: Number) -> Tuple[bool, float, int]:
    """s~(m + k + n) <= s~(m) s~(k) (1 + psi_max) over all m, k with m + k + n <= K"""
    K = len(values) - 1
    worst = None
    checked = 0
    factor = 1 + psi_max
    for m in range(K - n + 1):
        for k in range(K - n - m + 1):
            slack = values[m + k + n] - values[m] * values[k] * factor
            worst = slack if worst is None or slack > worst else worst
            checked += 1
    worst = float(worst) if worst is not None else 0.0
    return worst <= 0, worst, checked
