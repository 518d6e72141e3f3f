from typing import List, Sequence, Tuple

import numpy as np
from loguru import logger
from tqdm import tqdm

from models.schemas import (CriterionStudy, LaplaceConsistency, LaplacePoint,
                            LaplaceReport, MeasureSpec, Pattern, PatternFamily,
                            SweepoutSeries)
from agents.sweepout_agent import SweepoutAgent
from utils.automaton import sweepout_log_stream
from utils.errors import UsageError
from utils.laplace_tools import (LaplaceAccumulator, SeriesSum, accumulate,
                                 direct_hitting_sum, direct_return_sum,
                                 hsv_bounds, phi_hitting_from_value,
                                 phi_return_from_value)
from utils.shift_tools import family_members, pattern_measure
from config.settings import settings


class LaplaceAgent:
    """Agent for the Laplace-transform form of the exponential-limit criterion"""

    def __init__(self, sweepout_agent: SweepoutAgent = None, tol: float = None):
        self.sweepout = sweepout_agent or SweepoutAgent()
        self.tol = tol or settings.laplace_tolerance
        self.k_max = settings.laplace_k_max

    def _check_times(self, t_grid: Sequence[float]):
        if not t_grid or any(t <= 0 for t in t_grid):
            raise UsageError("Laplace variable t must be strictly positive")

    def _sum_series(self, series: SweepoutSeries, t_grid: Sequence[float],
                    tol: float) -> LaplaceAccumulator:
        self._check_times(t_grid)
        log_values = np.asarray(series.log_values)
        return accumulate([log_values], float(series.mu_A), t_grid, tol, series.K)

    def laplace_series(self, series: SweepoutSeries, t: float,
                       tol: float = None) -> Tuple[float, int, float]:
        """
        (1 - e^{-mu t}) sum_k e^{-mu k t} s~(k), truncated once the tail is below tol

        Returns:
            (value, K_used, tail_bound)

        Raises:
            SeriesTooShortError: the series ends before the tail drops below tol
        """
        result = self._sum_series(series, [t], tol or self.tol).results()[0]
        return result.value, result.K_used, result.tail_bound

    def phi_hitting(self, series: SweepoutSeries, t: float, tol: float = None) -> float:
        value, _, _ = self.laplace_series(series, t, tol)
        return phi_hitting_from_value(value)

    def phi_return(self, series: SweepoutSeries, t: float, tol: float = None) -> float:
        value, _, _ = self.laplace_series(series, t, tol)
        return phi_return_from_value(value, float(series.mu_A), t)

    def consistency(self, series: SweepoutSeries,
                    t_grid: Sequence[float] = None) -> List[LaplaceConsistency]:
        """Laplace-form transforms against direct sums over the hitting and return laws"""
        t_grid = t_grid or settings.t_grid
        mu = float(series.mu_A)
        values = np.array([float(x) for x in series.exact_values]) if series.is_exact \
            else np.asarray(series.values)
        sums = self._sum_series(series, t_grid, self.tol).results()

        rows = []
        for s in sums:
            phi_h = phi_hitting_from_value(s.value)
            phi_r = phi_return_from_value(s.value, mu, s.t)
            hit_direct, _ = direct_hitting_sum(values, mu, s.t)
            ret_direct, _ = direct_return_sum(values, mu, s.t)
            rows.append(LaplaceConsistency(
                t=s.t,
                series_value=s.value,
                tail_bound=s.tail_bound,
                phi_return=phi_r,
                phi_return_direct=ret_direct,
                phi_hitting=phi_h,
                phi_hitting_direct=hit_direct,
                return_residual=abs(phi_r - ret_direct),
                hitting_residual=abs(phi_h - hit_direct)
            ))
        return rows

    def report(self, pattern: Pattern, measure: MeasureSpec,
               t_grid: Sequence[float] = None, tol: float = None) -> LaplaceReport:
        """
        Stream s~(k) straight from the transfer operator until every t is truncated

        Memory stays at the automaton size, so targets with mu(A) ~ 2^-16
        and t = 0.1 are handled.
        """
        t_grid = list(t_grid or settings.t_grid)
        self._check_times(t_grid)
        tol = tol or self.tol
        mu = float(pattern_measure(pattern, measure))
        operator = self.sweepout.transfer_operator(pattern, measure)

        acc = accumulate(sweepout_log_stream(operator, self.sweepout.block),
                         mu, t_grid, tol, self.k_max)
        return self._build_report(pattern, mu, acc.results(), acc.c_sup, acc.c_tilde)

    def _build_report(self, pattern: Pattern, mu: float, sums: List[SeriesSum],
                      c_sup: float, c_tilde: float) -> LaplaceReport:
        points = []
        for s in sums:
            target = s.t / (s.t + 1.0)
            points.append(LaplacePoint(
                t=s.t,
                series_value=s.value,
                target=target,
                deviation=abs(s.value - target),
                phi_return=phi_return_from_value(s.value, mu, s.t),
                phi_hitting=phi_hitting_from_value(s.value),
                K_used=s.K_used,
                tail_bound=s.tail_bound
            ))
        c_tilde_bound, c_bound, holds = hsv_bounds(mu, c_sup, c_tilde, settings.grid_slack)
        report = LaplaceReport(
            pattern=str(pattern),
            l=pattern.length,
            mu=mu,
            points=points,
            sup_deviation=max(p.deviation for p in points),
            c_sup=c_sup,
            c_tilde=c_tilde,
            hsv_c_tilde_bound=c_tilde_bound,
            hsv_c_bound=c_bound,
            hsv_holds=holds,
            K_used=max(p.K_used for p in points)
        )
        logger.debug(f"Laplace {pattern}: sup deviation {report.sup_deviation:.3e}, "
                     f"K_used={report.K_used}")
        return report

    def criterion_report(self, family: PatternFamily, measure: MeasureSpec,
                         t_grid: Sequence[float] = None, tol: float = None) -> CriterionStudy:
        """Per-length sup_t |series - t/(t+1)| along a family"""
        t_grid = list(t_grid or settings.t_grid)
        reports = []
        for n, pattern in tqdm(family_members(family), desc=f"laplace {family.label}",
                               disable=not settings.show_progress):
            reports.append(self.report(pattern, measure, t_grid, tol))
        deviations = [r.sup_deviation for r in reports]
        study = CriterionStudy(
            family=family.label,
            measure=measure.label,
            t_grid=t_grid,
            reports=reports,
            sup_deviation_monotone=all(b <= a for a, b in zip(deviations, deviations[1:]))
        )
        logger.info(f"Criterion {family.label}: final sup deviation {deviations[-1]:.4g}")
        return study
