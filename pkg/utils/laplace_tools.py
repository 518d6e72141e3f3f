import math
from typing import Iterable, List, NamedTuple, Sequence

import numpy as np
from loguru import logger

from utils.errors import SeriesTooShortError


class SeriesSum(NamedTuple):
    """Truncated sum S = sum_{k<K} u^k s~(k), u = exp(-mu t)"""
    t: float
    weighted_sum: float
    value: float        # (1 - u) S
    K_used: int
    tail_bound: float   # u^K s~(K) / (1 - u)


def one_minus_u(mu: float, t: float) -> float:
    return -math.expm1(-mu * t)


def phi_hitting_from_value(value: float) -> float:
    return 1.0 - value


def phi_return_from_value(value: float, mu: float, t: float) -> float:
    """1 - (e^{mu t} - 1)/mu + (e^{mu t} - 1)/mu * value"""
    return 1.0 - math.expm1(mu * t) / mu * (1.0 - value)


def x_log_x(x: float) -> float:
    return 0.0 if x <= 0 else x * math.log(x)


class LaplaceAccumulator:
    """
    Streams blocks of log s~(k) into the truncated Laplace sums of several t

    Each t stops at the least K with u^K s~(K) / (1 - u) < tol. Alongside the
    sums it tracks sup_k |c_A(k)| and the step-function distance between the
    scaled return law and Exp(1).
    """

    def __init__(self, mu: float, t_grid: Sequence[float], tol: float):
        self.mu = mu
        self.t_grid = list(t_grid)
        self.tol = tol
        self.log_tol = math.log(tol)
        self.rates = np.array([mu * t for t in self.t_grid])
        self.log_norms = np.log(-np.expm1(-self.rates))
        self.partials: List[List[float]] = [[] for _ in self.t_grid]
        self.compensations = np.zeros(len(self.t_grid))
        self.sums = np.zeros(len(self.t_grid))
        self.K_used = [None] * len(self.t_grid)
        self.tail_bounds = [None] * len(self.t_grid)
        self.k = 0
        self.previous = None
        self.c_sup = 0.0
        self.c_tilde = 0.0
        self.last_slope = 0.0

    @property
    def done(self) -> bool:
        return all(K is not None for K in self.K_used)

    def feed(self, log_values: np.ndarray) -> bool:
        """Add the next block; returns True once every t is truncated"""
        n = len(log_values)
        ks = np.arange(self.k, self.k + n, dtype=float)
        for j, rate in enumerate(self.rates):
            if self.K_used[j] is not None:
                continue
            log_terms = log_values - rate * ks
            criterion = log_terms - self.log_norms[j]
            stop = np.nonzero(criterion < self.log_tol)[0]
            cut = stop[0] if len(stop) else n
            block_sum = float(np.sum(np.exp(log_terms[:cut])))
            # compensated accumulation across blocks
            y = block_sum - self.compensations[j]
            total = self.sums[j] + y
            self.compensations[j] = (total - self.sums[j]) - y
            self.sums[j] = total
            if len(stop):
                self.K_used[j] = self.k + int(cut)
                self.tail_bounds[j] = math.exp(criterion[cut])

        self._track_return_law(log_values)
        if n > 1:
            self.last_slope = float(log_values[-1] - log_values[0]) / (n - 1)
        self.k += n
        return self.done

    def _track_return_law(self, log_values: np.ndarray):
        s = np.exp(log_values)
        if self.previous is not None:
            s = np.concatenate(([self.previous], s))
            k0 = self.k - 1
        else:
            k0 = self.k
        if len(s) < 2:
            self.previous = s[-1]
            return
        ret = (s[:-1] - s[1:]) / self.mu
        c = s[:-1] - ret
        ks = np.arange(k0, k0 + len(ret), dtype=float)
        self.c_sup = max(self.c_sup, float(np.max(np.abs(c))))
        lower = np.exp(-ks * self.mu)
        upper = np.exp(-(ks + 1) * self.mu)
        self.c_tilde = max(self.c_tilde, float(np.max(np.abs(ret - lower))),
                           float(np.max(np.abs(ret - upper))))
        self.previous = s[-1]

    def required_k(self, j: int, log_value: float) -> int:
        """Extrapolated truncation index for a t that has not stopped yet"""
        rate = self.rates[j] - self.last_slope
        gap = log_value - self.rates[j] * self.k - self.log_norms[j] - self.log_tol
        if rate <= 0:
            return self.k * 2
        return self.k + int(math.ceil(gap / rate))

    def results(self) -> List[SeriesSum]:
        out = []
        for j, t in enumerate(self.t_grid):
            S = float(self.sums[j])
            out.append(SeriesSum(t=t, weighted_sum=S, value=one_minus_u(self.mu, t) * S,
                                 K_used=self.K_used[j], tail_bound=self.tail_bounds[j]))
        return out


def accumulate(blocks: Iterable[np.ndarray], mu: float, t_grid: Sequence[float],
               tol: float, k_max: int) -> LaplaceAccumulator:
    """
    Run an accumulator over a stream of log s~ blocks

    Raises:
        SeriesTooShortError: the stream ends, or passes k_max, before every t is truncated
    """
    acc = LaplaceAccumulator(mu, t_grid, tol)
    last = 0.0
    for block in blocks:
        if acc.feed(block):
            return acc
        last = float(block[-1])
        if acc.k > k_max:
            break
    pending = [j for j, K in enumerate(acc.K_used) if K is None]
    required = max(acc.required_k(j, last) for j in pending)
    logger.warning(f"Laplace sums not converged after k={acc.k} for "
                   f"t={[acc.t_grid[j] for j in pending]}; need about K={required}")
    raise SeriesTooShortError(
        f"series reaches k={acc.k - 1} but tolerance {tol} needs about K={required}",
        required_k=required)


def direct_hitting_sum(values: np.ndarray, mu: float, t: float):
    """sum_{k>=1} u^k mu(tau = k) and a bound for the omitted terms"""
    u = math.exp(-mu * t)
    K = len(values) - 1
    ks = np.arange(1, K + 1, dtype=float)
    total = float(np.sum(np.exp(-mu * t * ks) * (values[:-1] - values[1:])))
    return total, u ** (K + 1) * float(values[-1])


def direct_return_sum(values: np.ndarray, mu: float, t: float):
    """sum_{k>=1} u^k mu_A(tau = k) from the return tail, and the omitted-term bound"""
    u = math.exp(-mu * t)
    ret = (values[:-1] - values[1:]) / mu
    K = len(ret)
    ks = np.arange(1, K, dtype=float)
    total = float(np.sum(np.exp(-mu * t * ks) * (ret[:-1] - ret[1:])))
    return total, u ** K * float(ret[-1])


def hsv_bounds(mu: float, c_sup: float, c_tilde: float, slack: float):
    """
    Bridging inequalities between the two uniform distances

    Returns:
        (bound on c~, bound on c, both hold within slack)
    """
    c_tilde_bound = 4 * mu + c_sup - x_log_x(c_sup)
    c_bound = 2 * mu + 2 * c_tilde - x_log_x(c_tilde)
    holds = c_tilde <= c_tilde_bound + slack and c_sup <= c_bound + slack
    return c_tilde_bound, c_bound, holds
