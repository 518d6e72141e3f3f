from fractions import Fraction
from typing import List, Union

import numpy as np
from loguru import logger
from tqdm import tqdm

from models.schemas import (BoundsReport, ClassMembership, LowerBound,
                            MeasureSpec, Pattern, PatternFamily, PsiCertificate,
                            PsiProfile, RholimRow, RholimStudy,
                            SubadditivityReport, SweepoutSeries, UpperBound,
                            to_fraction)
from agents.escape_rate_agent import EscapeRateAgent
from agents.sweepout_agent import SweepoutAgent
from utils.errors import NotAMemberError, SeriesTooShortError, UsageError
from utils.psi_tools import (certify_psi, inclusion_exclusion_estimate,
                             least_mixing_gap, lower_argument,
                             lower_bound_value, lower_steps, overlap_sup,
                             psi_coefficients, subadditivity, upper_q,
                             upper_steps)
from utils.shift_tools import family_members, pattern_measure
from config.settings import settings

EPSILON_CEILING = Fraction(1, 10)
FLOAT_STEP_TOLERANCE = 1e-12


class MixingAgent:
    """Agent for psi-mixing profiles, class membership and escape-rate bounds"""

    def __init__(self, sweepout_agent: SweepoutAgent = None,
                 escape_agent: EscapeRateAgent = None, k_max: int = None):
        self.sweepout = sweepout_agent or SweepoutAgent()
        self.escape = escape_agent or EscapeRateAgent(self.sweepout)
        self.k_max = k_max or settings.psi_k_max

    def psi_profile(self, measure: MeasureSpec, k_max: int = None) -> PsiProfile:
        k_max = self.k_max if k_max is None else k_max
        psi = psi_coefficients(measure, k_max)
        return PsiProfile(
            measure=measure.label,
            k_max=k_max,
            psi=[float(x) for x in psi],
            psi_exact=psi,
            psi_max=float(max(psi))
        )

    def certify(self, measure: MeasureSpec, n_max: int = 3, m_max: int = 3,
                k_max: int = 4) -> PsiCertificate:
        """Exhaustive small-cylinder check of the psi profile"""
        psi = psi_coefficients(measure, k_max)
        return certify_psi(measure, psi, n_max, m_max, k_max)

    def classify(self, pattern: Pattern, measure: MeasureSpec,
                 epsilon: Union[Fraction, float, str],
                 profile: PsiProfile = None) -> ClassMembership:
        """
        Decide membership of the cylinder in the class A_eps

        Conditions:
        1. some gap ell with psi_ell < eps (the least one is taken)
        2. (n_A + ell) mu(A) < eps
        3. n_A sup_{1<=i<=n_A} mu(A & T^-i A) / mu(A) < eps

        Args:
            pattern: Target cylinder
            measure: Shift-invariant measure
            epsilon: Class parameter; the bounds need eps <= 0.1
            profile: Precomputed psi profile

        Returns:
            ClassMembership with the three flags and q_A for members
        """
        eps = to_fraction(epsilon)
        if eps <= 0:
            raise UsageError("epsilon must be positive")
        profile = profile or self.psi_profile(measure)
        psi = profile.psi_exact

        n = pattern.length
        mu = pattern_measure(pattern, measure)
        ell = least_mixing_gap(psi, eps)
        w = n + ell if ell is not None else None
        size_value = (w if w is not None else n) * mu
        sup = overlap_sup(pattern, measure, mu)
        overlap_value = n * sup

        condition_mixing = ell is not None
        condition_size = size_value < eps
        condition_overlap = overlap_value < eps

        reason = None
        if eps > EPSILON_CEILING:
            reason = "epsilon_out_of_range"
        elif not condition_mixing:
            reason = "no_mixing_gap"
        elif not condition_size:
            reason = "size"
        elif not condition_overlap:
            reason = "overlap"
        member = reason is None

        membership = ClassMembership(
            pattern=str(pattern),
            epsilon=eps,
            n_A=n,
            mu_A=mu,
            ell_A=ell,
            w_A=w,
            psi_ell=psi[ell] if ell is not None else None,
            condition_mixing=condition_mixing,
            condition_size=condition_size,
            condition_overlap=condition_overlap,
            size_value=size_value,
            overlap_sup=sup,
            overlap_value=overlap_value,
            q_A=upper_q(w, mu, psi[ell]) if member else None,
            member=member,
            reason=reason
        )
        logger.debug(f"classify {pattern} eps={eps}: member={member} reason={reason}")
        return membership

    def _require_member(self, membership: ClassMembership):
        if not membership.member:
            raise NotAMemberError(
                f"pattern {membership.pattern} is not in A_eps for eps={membership.epsilon} "
                f"({membership.reason})")

    @staticmethod
    def _values(series: SweepoutSeries) -> list:
        return series.exact_values if series.is_exact else series.values

    def rho_upper(self, membership: ClassMembership, series: SweepoutSeries) -> UpperBound:
        """rho_A <= -log(q_A) / w_A, with the step inequality checked on the series"""
        self._require_member(membership)
        w = membership.w_A
        q_A = membership.q_A
        values = self._values(series)
        exact = series.is_exact
        checked, holds, worst = upper_steps(values, w, q_A if exact else float(q_A),
                                            0.0 if exact else FLOAT_STEP_TOLERANCE)
        bound = -np.log(float(q_A)) / w
        return UpperBound(bound=float(bound), q_A=float(q_A), steps_checked=checked,
                          steps_hold=holds, worst_step_slack=worst)

    def rho_lower(self, membership: ClassMembership, k: int, psi_max: Fraction,
                  series: SweepoutSeries) -> LowerBound:
        """
        rho_A >= -log[1 - k w mu (1 - eps - k eps (1 + psi_max)) (1 - psi_ell)] / ((k+1) w)

        Raises:
            UsageError: k outside 1 <= k < 1/eps
            SeriesTooShortError: the series does not reach k w
        """
        self._require_member(membership)
        eps = membership.epsilon
        if k < 1 or k * eps >= 1:
            raise UsageError(f"k={k} outside 1 <= k < 1/eps")
        w = membership.w_A
        mu = membership.mu_A
        psi_ell = membership.psi_ell
        if k * w > series.K:
            raise SeriesTooShortError(f"lower bound with k={k} needs K >= {k * w}",
                                      required_k=k * w)

        x = lower_argument(k, w, mu, eps, psi_ell, psi_max)
        bound, vacuous = lower_bound_value(x, k, w)

        values = self._values(series)
        exact = series.is_exact
        cover = 1 - values[k * w]
        p_hat = 1 - cover * (1 - psi_ell) if exact else 1 - cover * (1 - float(psi_ell))
        estimate = inclusion_exclusion_estimate(k, w, mu, eps, psi_max)
        checked, holds = lower_steps(values, k, w, p_hat,
                                     0.0 if exact else FLOAT_STEP_TOLERANCE)
        if exact:
            estimate_holds = cover >= estimate
        else:
            estimate_holds = float(cover) >= float(estimate) - FLOAT_STEP_TOLERANCE
        return LowerBound(
            k=k,
            bound=bound,
            vacuous=vacuous,
            p_hat=float(p_hat),
            exact_cover=float(cover),
            inclusion_exclusion_estimate=float(estimate),
            estimate_holds=estimate_holds,
            steps_checked=checked,
            steps_hold=holds
        )

    def subadditivity_check(self, series: SweepoutSeries, n_A: int,
                            psi_max: Fraction) -> SubadditivityReport:
        """log s~(m+k+n) <= log s~(m) + log s~(k) + log(1 + psi_max), all m, k"""
        if not series.is_exact:
            raise UsageError("subadditivity check needs an exact series")
        holds, worst, checked = subadditivity(series.exact_values, n_A, psi_max)
        return SubadditivityReport(holds=holds, worst_slack=worst, checked=checked,
                                   psi_max=float(psi_max))

    def rate_oscillation(self, series: SweepoutSeries) -> float:
        """Spread of -log s~(k)/k over the last quartile of k"""
        K = series.K
        start = max(1, (3 * K) // 4)
        logs = np.asarray(series.log_values[start:])
        k = np.arange(start, K + 1, dtype=float)
        rates = -logs / k
        return float(rates.max() - rates.min())

    def bounds(self, pattern: Pattern, measure: MeasureSpec,
               epsilon: Union[Fraction, float, str], K: int = None,
               exact: bool = True) -> BoundsReport:
        """Escape-rate sandwich for a member of A_eps"""
        K = K or settings.k_default
        profile = self.psi_profile(measure)
        membership = self.classify(pattern, measure, epsilon, profile)
        self._require_member(membership)

        series = self.sweepout.sweepout_series(pattern, measure, K, exact=exact)
        if exact and not series.is_exact:
            series = self.sweepout.sweepout_series(pattern, measure, series.exact_through,
                                                   exact=True)
        rho = self.escape.escape_rate(pattern, measure, series=series).rho
        psi_max = max(profile.psi_exact)

        upper = self.rho_upper(membership, series)
        lowers = []
        k = 1
        while k * membership.epsilon < 1 and k * membership.w_A <= series.K:
            lowers.append(self.rho_lower(membership, k, psi_max, series))
            k += 1
        if not lowers:
            raise SeriesTooShortError(f"lower bound needs K >= {membership.w_A}",
                                      required_k=membership.w_A)
        best = max(lowers, key=lambda b: b.bound)

        report = BoundsReport(
            membership=membership,
            rho=rho,
            upper=upper,
            lowers=lowers,
            best_lower=best,
            sandwich_holds=best.bound <= rho <= upper.bound,
            rate_oscillation=self.rate_oscillation(series)
        )
        logger.info(f"Bounds for {pattern}: {best.bound:.6g} <= rho={rho:.6g} <= {upper.bound:.6g}")
        return report

    def rholim_study(self, family: PatternFamily, measure: MeasureSpec,
                     K: int = None) -> RholimStudy:
        """
        rho/mu along a family with eps_n = 1/n_A

        Non-member rows carry their reason and no bounds.
        """
        K = K or settings.k_default
        profile = self.psi_profile(measure)
        psi_max = max(profile.psi_exact)
        rows: List[RholimRow] = []
        for n, pattern in tqdm(family_members(family), desc=f"rholim {family.label}",
                               disable=not settings.show_progress):
            epsilon = Fraction(1, pattern.length)
            membership = self.classify(pattern, measure, epsilon, profile)
            series = self.sweepout.sweepout_series(pattern, measure, K, exact=False)
            rho = self.escape.escape_rate(pattern, measure, series=series).rho
            mu = float(membership.mu_A)

            lower = upper = None
            if membership.member:
                upper = self.rho_upper(membership, series).bound
                candidates = [self.rho_lower(membership, k, psi_max, series).bound
                              for k in range(1, pattern.length)
                              if k * membership.w_A <= series.K]
                lower = max(candidates) if candidates else None
            rows.append(RholimRow(n=n, l=pattern.length, mu=mu, rho=rho, lower=lower,
                                  upper=upper, ratio=rho / mu, member=membership.member,
                                  reason=membership.reason))

        members = [r for r in rows if r.member]
        deviations = [abs(r.ratio - 1.0) for r in members]
        study = RholimStudy(
            family=family.label,
            measure=measure.label,
            rows=rows,
            sandwich_holds=all((r.lower is None or r.lower <= r.rho) and r.rho <= r.upper
                               for r in members),
            deviation_monotone=all(b <= a for a, b in zip(deviations, deviations[1:])),
            final_deviation=deviations[-1] if deviations else None
        )
        logger.info(f"rholim {family.label}: {len(members)}/{len(rows)} members, "
                    f"last member |rho/mu - 1| = {study.final_deviation}")
        return study
