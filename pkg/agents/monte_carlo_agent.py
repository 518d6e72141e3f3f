import math
from functools import partial
from typing import Sequence, Union

import numpy as np
from loguru import logger

from models.schemas import (MeasureSpec, Observable, Pattern, SampleKind,
                            SampleStats)
from utils.automaton import build_automaton
from utils.errors import UsageError
from utils.observable_tools import TaufEngine
from utils.sampling import (empirical_tail, ks_statistic, run_batches,
                            run_pattern_batch, run_tauf_batch, scaled_cdf)
from utils.shift_tools import pattern_measure
from config.settings import settings


class MonteCarloAgent:
    """Agent for simulated hitting, return and generalized hitting times"""

    def __init__(self, jobs: int = None, batch_size: int = None):
        self.jobs = jobs or settings.jobs
        self.batch_size = batch_size or settings.mc_batch_size
        self.cap_factor = settings.step_cap_factor
        self.tail_k_max = settings.tail_k_max

    def _step_cap(self, mu: float) -> int:
        return int(math.ceil(self.cap_factor / mu))

    def _check(self, N: int):
        if N < 1:
            raise UsageError("N must be at least 1")

    def sample_hitting(self, measure: MeasureSpec, pattern: Pattern, N: int,
                       seed: int = None) -> SampleStats:
        """
        N first entrance times tau_A = inf{k >= 1: T^k x in A} from a stationary start

        Args:
            measure: Shift-invariant measure
            pattern: Target cylinder
            N: Number of trajectories
            seed: Base seed; identical (seed, N) gives identical samples

        Returns:
            SampleStats with the raw samples attached
        """
        return self._sample_pattern(SampleKind.HITTING, measure, pattern, N, seed)

    def sample_return(self, measure: MeasureSpec, pattern: Pattern, N: int,
                      seed: int = None) -> SampleStats:
        """N first return times under mu conditioned on the cylinder"""
        return self._sample_pattern(SampleKind.RETURN, measure, pattern, N, seed)

    def _sample_pattern(self, kind: SampleKind, measure: MeasureSpec, pattern: Pattern,
                        N: int, seed: int = None) -> SampleStats:
        self._check(N)
        seed = settings.default_seed if seed is None else seed
        mu = float(pattern_measure(pattern, measure))
        cap = self._step_cap(mu)
        automaton = build_automaton(pattern, measure.q)
        logger.info(f"Sampling {N} {kind.value} times for {pattern} under {measure.label}")
        batch = partial(self._pattern_job, automaton=automaton, measure=measure, cap=cap,
                        conditioned=kind == SampleKind.RETURN)
        taus = run_batches(batch, N, seed, self.batch_size, self.jobs, settings.show_progress)
        return self.summarize(kind, taus, mu, seed, N, cap)

    @staticmethod
    def _pattern_job(rng, size, automaton, measure, cap, conditioned):
        return run_pattern_batch(rng, automaton, measure, size, cap, conditioned)

    def sample_tauf(self, observable: Observable, measure: MeasureSpec, N: int,
                    seed: int = None) -> SampleStats:
        """N simulated tau_f, with partial sums kept as integer residues"""
        self._check(N)
        seed = settings.default_seed if seed is None else seed
        engine = TaufEngine(observable, measure, settings.state_budget)
        eps = float(engine.support_measure)
        cap = self._step_cap(eps)
        goto = np.array(engine.automaton.goto, dtype=np.int64)
        increments = np.array(engine.increment, dtype=np.int64)

        def batch(rng, size):
            return run_tauf_batch(rng, goto, increments, engine.D, engine.w, measure, size, cap)

        logger.info(f"Sampling {N} tau_f times (depth {engine.w}, D={engine.D})")
        taus = run_batches(batch, N, seed, self.batch_size, self.jobs, settings.show_progress)
        return self.summarize(SampleKind.TAUF, taus, eps, seed, N, cap)

    def ks_exponential(self, samples: Union[SampleStats, np.ndarray], mu: float) -> float:
        """KS distance between mu * tau and Exp(1)"""
        data = samples.samples if isinstance(samples, SampleStats) else np.asarray(samples)
        if data is None or len(data) == 0:
            raise UsageError("KS test needs at least one sample")
        return ks_statistic(mu * np.asarray(data, dtype=float))

    def summarize(self, kind: SampleKind, taus: np.ndarray, mu: float, seed: int, N: int,
                  cap: int, t_grid: Sequence[float] = None) -> SampleStats:
        """Tail, scaled CDF, KS and Kac statistics of the trajectories that finished"""
        t_grid = list(t_grid or settings.t_grid)
        valid = taus[taus >= 1]
        capped = int(N - len(valid))
        if capped:
            logger.warning(f"{capped} of {N} trajectories reached the step cap {cap}")
        if len(valid) == 0:
            raise UsageError(f"all {N} trajectories reached the step cap {cap}")

        mean = float(np.mean(valid))
        variance = float(np.var(valid, ddof=1)) if len(valid) > 1 else 0.0
        ks = list(range(self.tail_k_max + 1))
        stats = SampleStats(
            kind=kind,
            N=N,
            seed=seed,
            mu=mu,
            n_valid=len(valid),
            capped=capped,
            step_cap=cap,
            mean=mean,
            variance=variance,
            tail_k=ks,
            empirical_tail=empirical_tail(valid, ks),
            t_grid=t_grid,
            scaled_cdf=scaled_cdf(valid, mu, t_grid),
            ks_stat=ks_statistic(mu * valid.astype(float)),
            kac_mean=mean,
            kac_scaled=mean * mu,
            kac_sigma=math.sqrt(variance / len(valid)) * mu,
            samples=valid
        )
        logger.info(f"{kind.value}: mean={mean:.6g}, mu*mean={stats.kac_scaled:.6g} "
                    f"+- {stats.kac_sigma:.2g}, KS={stats.ks_stat:.4g}")
        return stats
