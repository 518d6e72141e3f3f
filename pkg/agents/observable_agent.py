import math
from typing import List, Sequence, Tuple

import numpy as np
from loguru import logger
from tqdm import tqdm

from models.schemas import (ArithmeticMode, MeasureSpec, Observable,
                            ObservableFamily, ObservableSummary,
                            TaufIdentityReport, TaufLaplacePoint, TaufSeries,
                            TaufStudy, TaufStudyRow)
from utils.errors import UsageError
from utils.laplace_tools import accumulate, direct_hitting_sum, phi_hitting_from_value
from utils.observable_tools import (TaufEngine, collect_stream,
                                    family_observable, summarize_observable)
from utils.shift_tools import family_members
from config.settings import settings


def step_distance(tail: np.ndarray, eps: float) -> float:
    """sup_t |P(eps tau > t) - e^-t| for a tail given at integer k"""
    k = np.arange(len(tail), dtype=float)
    return float(max(np.max(np.abs(tail - np.exp(-k * eps))),
                     np.max(np.abs(tail - np.exp(-(k + 1) * eps)))))


def transform_from_tail(tail: np.ndarray, eps: float, t: float) -> float:
    """sum_{k>=1} e^{-eps k t} P(tau = k) for a tail starting at P(tau > 0) = 1"""
    value, _ = direct_hitting_sum(tail, eps, t)
    return value


class ObservableAgent:
    """Agent for generalized hitting times tau_f of finite-depth observables"""

    def __init__(self, state_budget: int = None, tol: float = None):
        self.state_budget = state_budget or settings.state_budget
        self.tol = tol or settings.laplace_tolerance
        self.k_max = settings.laplace_k_max

    def engine(self, observable: Observable, measure: MeasureSpec) -> TaufEngine:
        return TaufEngine(observable, measure, self.state_budget)

    def summary(self, observable: Observable, measure: MeasureSpec) -> ObservableSummary:
        return summarize_observable(observable, measure)

    def exact_tauf_series(self, observable: Observable, measure: MeasureSpec, K: int,
                          exact: bool = True) -> TaufSeries:
        """
        s~_f(k) = mu(tau_f > k) for k = 0..K

        Raises:
            StateBudgetError: the product automaton would exceed the state budget
        """
        if K < 0:
            raise UsageError("K must be non-negative")
        engine = self.engine(observable, measure)
        exact_values = None
        if exact:
            exact_values = engine.exact_tail(K)
            values = [float(x) for x in exact_values]
        else:
            values = collect_stream(engine.float_stream(), K).tolist()
        logger.debug(f"tau_f series to K={K}: s~_f(K)={values[-1]:.6g}")
        return TaufSeries(
            observable=observable,
            measure=measure,
            K=K,
            mode=ArithmeticMode.EXACT if exact else ArithmeticMode.FLOAT,
            summary=self.summary(observable, measure),
            values=values,
            exact_values=exact_values
        )

    def tauf_identity_check(self, observable: Observable, measure: MeasureSpec,
                            K: int) -> TaufIdentityReport:
        """
        mu_{A_f}(tau_f > k) = (s~_f(k) - s~_f(k+1)) / mu(A_f) + mu_{T^-1 A_f}(tau_f > k+1)

        Every term is computed exactly from the product automaton with the
        matching conditioned start; the worst residual over k <= K is returned.
        """
        engine = self.engine(observable, measure)
        eps = engine.support_measure
        s = engine.exact_tail(K + 1)
        inside = engine.exact_tail(K, condition_window=0)
        shifted = engine.exact_tail(K + 1, condition_window=1)

        residual = max(abs(inside[k] / eps - (s[k] - s[k + 1]) / eps - shifted[k + 1] / eps)
                       for k in range(K + 1))
        report = TaufIdentityReport(K=K, residual=float(residual), exact=True,
                                    k0_consistent=inside[0] / eps == 1)
        logger.info(f"tau_f identity residual over k <= {K}: {report.residual}")
        return report

    def _laplace_run(self, engine: TaufEngine, t_grid: Sequence[float],
                     tol: float) -> Tuple[List[TaufLaplacePoint], np.ndarray, np.ndarray, int]:
        eps = float(engine.support_measure)
        seen: List[np.ndarray] = []

        def log_blocks():
            for block in engine.float_stream():
                seen.append(block)
                with np.errstate(divide='ignore'):
                    yield np.log(block)

        acc = accumulate(log_blocks(), eps, t_grid, tol, self.k_max)
        K = max(acc.K_used)
        hitting = np.concatenate(seen)[:K + 1]
        inside = collect_stream(engine.float_stream(condition_window=0), K) / eps
        shifted = collect_stream(engine.float_stream(condition_window=1), K) / eps

        points = []
        for s in acc.results():
            growth = math.expm1(eps * s.t)
            phi_x = phi_hitting_from_value(s.value)
            phi_shifted = transform_from_tail(shifted, eps, s.t)
            phi_a = (growth + 1.0) * phi_shifted - growth / eps + growth / eps * s.value
            target = s.t / (s.t + 1.0)
            points.append(TaufLaplacePoint(
                t=s.t,
                series_value=s.value,
                target=target,
                deviation=abs(s.value - target),
                phi_hitting=phi_x,
                phi_hitting_direct=transform_from_tail(hitting, eps, s.t),
                phi_return=phi_a,
                phi_return_direct=transform_from_tail(inside, eps, s.t)
            ))
        return points, hitting, inside, K

    def tauf_laplace(self, observable: Observable, measure: MeasureSpec,
                     t_grid: Sequence[float] = None, tol: float = None) -> List[TaufLaplacePoint]:
        """
        Laplace transforms of eps tau_f on X and on A_f

        phi_X(t) = 1 - (1 - e^{-eps t}) sum_k e^{-eps k t} s~_f(k)
        phi_A(t) = e^{eps t} phi_{T^-1 A}(t) - (e^{eps t} - 1)/eps
                   + (e^{eps t} - 1)/eps (1 - e^{-eps t}) sum_k e^{-eps k t} s~_f(k)
        Each is returned next to the direct sum over the corresponding law.
        """
        t_grid = list(t_grid or settings.t_grid)
        if any(t <= 0 for t in t_grid):
            raise UsageError("Laplace variable t must be strictly positive")
        points, _, _, _ = self._laplace_run(self.engine(observable, measure), t_grid,
                                            tol or self.tol)
        return points

    def tauf_limit_study(self, family: ObservableFamily, measure: MeasureSpec,
                         t_grid: Sequence[float] = None, tol: float = None) -> TaufStudy:
        """Series criterion and scaled laws of tau_{f_n} along an observable family"""
        t_grid = list(t_grid or settings.t_grid)
        rows = []
        for n, _ in tqdm(family_members(family.family), desc="tau_f family",
                         disable=not settings.show_progress):
            observable = family_observable(family, n, measure.q)
            summary = self.summary(observable, measure)
            eps = float(summary.eps_f)
            points, hitting, inside, K = self._laplace_run(self.engine(observable, measure),
                                                           t_grid, tol or self.tol)
            rows.append(TaufStudyRow(
                n=n,
                eps_f=eps,
                hypothesis_ratio=float(summary.hypothesis_ratio),
                sup_deviation=max(p.deviation for p in points),
                sup_dev_law_X=step_distance(hitting, eps),
                sup_dev_law_A=step_distance(inside, eps),
                K_used=K
            ))
        deviations = [r.sup_deviation for r in rows]
        study = TaufStudy(
            kind=family.kind,
            family=family.family.label,
            measure=measure.label,
            rows=rows,
            deviation_monotone=all(b <= a for a, b in zip(deviations, deviations[1:]))
        )
        logger.info(f"tau_f study {family.kind.value} {family.family.label}: "
                    f"final deviation {deviations[-1]:.4g}")
        return study
