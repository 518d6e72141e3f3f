import math
from typing import List, Optional

import numpy as np
from loguru import logger
from tqdm import tqdm

from models.schemas import (CorrelationPolynomial, EscapeRateReport,
                            MeasureSpec, MeasureType, Pattern, PatternFamily,
                            RatioStudy, RootResult, SweepoutSeries)
from agents.sweepout_agent import SweepoutAgent
from utils.automaton import build_automaton, counting_matrix, spectral_radius
from utils.correlation_tools import (closed_form_rate, correlation_polynomial,
                                     dominant_root, gf_coefficients,
                                     ratio_closed_limit, root_expansion,
                                     tail_slope)
from utils.errors import ClosedFormUnavailableError, SeriesTooShortError
from utils.shift_tools import family_members
from config.settings import settings


class EscapeRateAgent:
    """Agent for correlation polynomials, dominant roots and escape rates"""

    def __init__(self, sweepout_agent: SweepoutAgent = None):
        self.sweepout = sweepout_agent or SweepoutAgent()
        self.min_fit_length = settings.min_fit_length

    def correlation_polynomial(self, pattern: Pattern) -> CorrelationPolynomial:
        return correlation_polynomial(pattern)

    def gf_coefficients(self, pattern: Pattern, q: int, N: int) -> List[int]:
        """f_A(0..N) from the rational generating function"""
        return gf_coefficients(correlation_polynomial(pattern), q, N)

    def dominant_root(self, pattern: Pattern, q: int) -> RootResult:
        corr = correlation_polynomial(pattern)
        transfer = counting_matrix(build_automaton(pattern, q))
        return dominant_root(
            corr, q, transfer,
            tol=settings.root_tolerance,
            scan_points=settings.root_scan_points,
            power_tol=settings.power_iteration_tolerance,
            power_max_iter=settings.power_iteration_max_iter,
            mismatch_tol=settings.root_mismatch_tolerance
        )

    def escape_rate(self, pattern: Pattern, measure: MeasureSpec,
                    series: Optional[SweepoutSeries] = None, K: int = None,
                    closed_form: Optional[bool] = None) -> EscapeRateReport:
        """
        Estimate rho_A three ways and compare with the measure of A

        Args:
            pattern: Target cylinder
            measure: Shift-invariant measure
            series: Sweep-out series; computed in float mode when omitted
            K: Series length when the series is computed here
            closed_form: True demands rho_closed, False skips it, None uses it when available

        Returns:
            EscapeRateReport
        """
        uniform = measure.type == MeasureType.UNIFORM
        if closed_form and not uniform:
            raise ClosedFormUnavailableError(
                f"closed-form escape rate needs a uniform measure, got {measure.label}")

        if series is None:
            series = self.sweepout.sweepout_series(pattern, measure, K or settings.k_default,
                                                   exact=False)
        if series.K < self.min_fit_length:
            raise SeriesTooShortError(
                f"escape-rate fit needs K >= {self.min_fit_length}, got {series.K}",
                required_k=self.min_fit_length)

        corr = correlation_polynomial(pattern)
        q = measure.q
        mu = series.mu_A
        mu_f = float(mu)

        root = None
        if uniform and closed_form is not False:
            root = self.dominant_root(pattern, q)

        operator = self.sweepout.transfer_operator(pattern, measure)
        lam, _ = spectral_radius(operator.matrix, settings.power_iteration_tolerance,
                                 settings.power_iteration_max_iter)
        rho_spectral = -math.log(lam)

        log_values = np.asarray(series.log_values)
        rho_fit = tail_slope(log_values, series.K // 2)

        rho_closed = closed_form_rate(root.root, q) if root else None
        rho = rho_closed if rho_closed is not None else rho_spectral

        expansion = float(root_expansion(corr, q)) if uniform else None
        values = np.asarray(series.values)
        k = np.arange(series.K + 1, dtype=float)

        report = EscapeRateReport(
            pattern=str(pattern),
            l=pattern.length,
            q=q,
            measure=measure.label,
            K=series.K,
            root=root.root if root else None,
            root_method=root.method if root else None,
            root_expansion=expansion,
            root_expansion_error=abs(root.root - expansion) if root else None,
            rho_closed=rho_closed,
            rho_spectral=rho_spectral,
            rho_fit=rho_fit,
            fit_deviation=abs(rho - rho_fit),
            mu_A=mu_f,
            mu_A_exact=mu,
            rho=rho,
            ratio=rho / mu_f,
            ratio_closed_limit=ratio_closed_limit(corr, q),
            sup_dev_exp=float(np.max(np.abs(values - np.exp(-k * rho)))),
            sup_dev_mu=float(np.max(np.abs(values - np.exp(-k * mu_f))))
        )
        logger.info(f"Escape rate of {pattern}: rho={rho:.10g}, fit={rho_fit:.10g}, "
                    f"ratio={report.ratio:.6g}")
        return report

    def ratio_study(self, family: PatternFamily, measure: MeasureSpec,
                    K: int = None) -> RatioStudy:
        """
        rho/mu along a shrinking family, with the periodic-limit comparison

        For constant and periodic families the measured last ratio is set
        against 1 - q^-m (closed-form limit) and 1 + q^-m.
        """
        K = K or settings.k_default
        members = family_members(family)
        reports = []
        for n, pattern in tqdm(members, desc=f"ratio {family.label}",
                               disable=not settings.show_progress):
            reports.append(self.escape_rate(pattern, measure, K=K))

        deviations = [abs(r.ratio - 1.0) for r in reports]
        sup_devs = [r.sup_dev_exp for r in reports]
        study = RatioStudy(
            family=family.label,
            measure=measure.label,
            reports=reports,
            ratio_monotone=all(b <= a for a, b in zip(deviations, deviations[1:])),
            sup_dev_monotone=all(b <= a for a, b in zip(sup_devs, sup_devs[1:]))
        )

        m = family.period
        if m is not None:
            q = measure.q
            measured = reports[-1].ratio
            predicted = 1.0 - q ** (-m)
            stated = 1.0 + q ** (-m)
            study.period = m
            study.measured_limit = measured
            study.predicted_limit = predicted
            study.stated_limit = stated
            study.discrepancy = abs(measured - predicted) < abs(measured - stated)
            logger.info(f"Periodic limit (m={m}): measured {measured:.6f}, "
                        f"1-q^-m={predicted:.6f}, 1+q^-m={stated:.6f}")
        return study
