import math
from fractions import Fraction
from typing import List

import numpy as np
from loguru import logger

from models.schemas import (ArithmeticMode, AvoidanceAutomaton,
                            HittingReturnDistributions, IdentityReport,
                            MeasureSpec, MeasureType, Pattern, SweepoutSeries)
from utils.automaton import (TransferOperator, build_automaton,
                             collect_log_sweepout, count_avoiding,
                             count_sequence)
from utils.errors import UsageError
from utils.shift_tools import pattern_measure
from config.settings import settings


def log_fraction(x: Fraction) -> float:
    """log of a positive rational without going through a float that may underflow"""
    return math.log(x.numerator) - math.log(x.denominator)


class SweepoutAgent:
    """Agent for avoidance counts, sweep-out series and hitting/return tails"""

    def __init__(self, k_exact: int = None, block: int = None):
        self.k_exact = settings.k_exact if k_exact is None else k_exact
        self.block = block or settings.stream_block

    def build_automaton(self, pattern: Pattern, q: int) -> AvoidanceAutomaton:
        return build_automaton(pattern, q)

    def count_avoiding(self, pattern: Pattern, q: int, n: int) -> int:
        """f_A(n), exact"""
        if n < 0:
            raise UsageError("word length must be non-negative")
        return count_avoiding(build_automaton(pattern, q), n)

    def transfer_operator(self, pattern: Pattern, measure: MeasureSpec) -> TransferOperator:
        return TransferOperator(build_automaton(pattern, measure.q), measure)

    def sweepout_series(self, pattern: Pattern, measure: MeasureSpec, K: int,
                        exact: bool = True) -> SweepoutSeries:
        """
        Compute s~(k) = mu(tau_A > k) for k = 0..K

        Args:
            pattern: Target cylinder
            measure: Shift-invariant measure
            K: Last index
            exact: Keep rational values up to K_exact

        Returns:
            SweepoutSeries with floats for every k and rationals where available
        """
        if K < 0:
            raise UsageError("K must be non-negative")
        mu = pattern_measure(pattern, measure)
        operator = self.transfer_operator(pattern, measure)
        length = pattern.length

        log_values = collect_log_sweepout(operator, K, self.block)

        exact_values = None
        exact_through = None
        if exact:
            exact_through = min(K, self.k_exact)
            if exact_through < K:
                logger.warning(f"K={K} exceeds K_exact={self.k_exact}; "
                               f"rational values stop at k={exact_through}, floats beyond")
            masses = operator.exact_masses(exact_through + length - 1)
            exact_values = masses[length - 1:exact_through + length]
            log_values[:exact_through + 1] = [log_fraction(x) for x in exact_values]

        logger.debug(f"Sweep-out of {pattern} under {measure.label}: K={K}, "
                     f"log s~(K)={log_values[-1]:.6g}")
        return SweepoutSeries(
            pattern=pattern,
            measure=measure,
            K=K,
            mu_A=mu,
            mode=ArithmeticMode.EXACT if exact else ArithmeticMode.FLOAT,
            values=np.exp(log_values).tolist(),
            log_values=log_values.tolist(),
            exact_values=exact_values,
            exact_through=exact_through
        )

    def distributions(self, series: SweepoutSeries) -> HittingReturnDistributions:
        """Hitting tail s~(k), return tail (s~(k) - s~(k+1)) / mu(A) and c_A(k)"""
        if series.K < 1:
            raise UsageError("distributions need a series with K >= 1")
        K = series.K
        mu = series.mu_A

        exact = None
        if series.is_exact:
            s = series.exact_values
            ret = [(s[k] - s[k + 1]) / mu for k in range(K)]
            c = [s[k] - ret[k] for k in range(K)]
            exact = (s, ret, c)
            hitting = [float(x) for x in s]
            returning = [float(x) for x in ret]
            diff = [float(x) for x in c]
        else:
            s = np.asarray(series.values)
            ret_arr = (s[:-1] - s[1:]) / float(mu)
            hitting = s.tolist()
            returning = ret_arr.tolist()
            diff = (s[:-1] - ret_arr).tolist()

        return HittingReturnDistributions(
            K=K,
            hitting_tail=hitting,
            return_tail=returning,
            c=diff,
            sup_c=max(abs(x) for x in diff),
            exact_hitting_tail=exact[0] if exact else None,
            exact_return_tail=exact[1] if exact else None,
            exact_c=exact[2] if exact else None,
            exact_sup_c=max(abs(x) for x in exact[2]) if exact else None
        )

    def check_identities(self, series: SweepoutSeries) -> IdentityReport:
        """
        Verify the sweep-out identities on an exact series

        - return tail from a start conditioned on A equals (s~(k) - s~(k+1)) / mu(A)
        - s~(k) - (1 - mu) s~(k-1) = mu c_A(k-1)
        - s~(k) = (1-mu)^k + mu sum_j (1-mu)^(k-1-j) c_A(j)
        - uniform measures: s~(k) = q^-(k+l-1) f_A(k+l-1)
        - Kac: the return tails sum to 1/mu(A)
        """
        if not series.is_exact:
            raise UsageError("identity checks need a series that is exact over its whole range")
        K = series.K
        mu = series.mu_A
        s = series.exact_values
        ret = self.distributions(series).exact_return_tail

        operator = self.transfer_operator(series.pattern, series.measure)
        direct = operator.exact_return_tail(K - 1)
        return_residual = max(abs(direct[k] - ret[k]) for k in range(K))

        # c_A from the chain started inside A, not from differences of s~
        c = [s[k] - direct[k] for k in range(K)]
        recursion_residual = max(abs(s[k] - (1 - mu) * s[k - 1] - mu * c[k - 1])
                                 for k in range(1, K + 1))

        convolution_residual = Fraction(0)
        convolution = Fraction(0)
        for k in range(1, K + 1):
            convolution = (1 - mu) * convolution + c[k - 1]
            convolved = (1 - mu) ** k + mu * convolution
            convolution_residual = max(convolution_residual, abs(s[k] - convolved))

        bridge_residual = None
        if series.measure.type == MeasureType.UNIFORM:
            length = series.pattern.length
            q = series.measure.q
            counts = count_sequence(operator.automaton, K + length - 1)
            bridge_residual = float(max(
                abs(s[k] - Fraction(counts[k + length - 1], q ** (k + length - 1)))
                for k in range(1, K + 1)))

        kac_partial = sum(ret, Fraction(0))
        kac_tail = s[K] / mu
        kac_target = 1 / mu

        report = IdentityReport(
            pattern=str(series.pattern),
            K=K,
            exact=True,
            return_identity_residual=float(return_residual),
            recursion_residual=float(recursion_residual),
            convolution_residual=float(convolution_residual),
            uniform_bridge_residual=bridge_residual,
            monotone=all(s[k + 1] <= s[k] for k in range(K)),
            lower_bound_holds=all(s[k] >= max(1 - k * mu, Fraction(0)) for k in range(K + 1)),
            kac_partial_sum=float(kac_partial),
            kac_tail=float(kac_tail),
            kac_target=float(kac_target),
            kac_bracket_holds=kac_partial <= kac_target <= kac_partial + kac_tail
        )
        logger.info(f"Identities for {series.pattern}: recursion={report.recursion_residual}, "
                    f"convolution={report.convolution_residual}, return={report.return_identity_residual}")
        return report
