import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import stats
from tqdm import tqdm

from models.schemas import AvoidanceAutomaton, MeasureSpec, MeasureType
from utils.shift_tools import initial_weights, transition_weights

# PCG64 streams keyed by (seed, batch index); the split is independent of --jobs
BIT_GENERATOR = "PCG64"


def batch_generator(seed: int, batch_index: int) -> np.random.Generator:
    """Generator for one batch: SeedSequence(seed, spawn_key=(batch,)) -> PCG64"""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(batch_index,))
    return np.random.Generator(np.random.PCG64(sequence))


def cumulative_tables(measure: MeasureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Cumulative laws of the first symbol and of the next symbol after each symbol"""
    first = np.cumsum([float(x) for x in initial_weights(measure)])
    rows = np.cumsum([[float(x) for x in row] for row in transition_weights(measure)], axis=1)
    first[-1] = 1.0
    rows[:, -1] = 1.0
    return first, rows


def draw(rng: np.random.Generator, cumulative: np.ndarray, size: int) -> np.ndarray:
    """Inverse-CDF draw from one cumulative law"""
    return np.searchsorted(cumulative, rng.random(size), side='right')


def draw_next(rng: np.random.Generator, rows: np.ndarray, last: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of the next symbol, one law per trajectory"""
    u = rng.random(len(last))
    symbols = (u[:, None] >= rows[last]).sum(axis=1)
    return np.minimum(symbols, rows.shape[1] - 1)


def full_transitions(automaton: AvoidanceAutomaton) -> np.ndarray:
    """Transition table including the accepting state l"""
    length = automaton.pattern.length
    table = np.zeros((length + 1, automaton.q), dtype=np.int64)
    table[:length] = automaton.transitions
    table[length] = automaton.transitions[automaton.failure[length]]
    return table


def run_pattern_batch(rng: np.random.Generator, automaton: AvoidanceAutomaton,
                      measure: MeasureSpec, size: int, cap: int,
                      conditioned: bool) -> np.ndarray:
    """
    First occurrence times for one batch; -1 marks trajectories stopped at the cap

    Unconditioned runs read x_1, x_2, ... from a stationary start. Conditioned
    runs start inside the cylinder, with the automaton primed by pattern[1:]
    and the continuation drawn after the pattern's last symbol.
    """
    pattern = automaton.pattern
    length = pattern.length
    table = full_transitions(automaton)
    first, rows = cumulative_tables(measure)
    markov = measure.type == MeasureType.MARKOV

    tau = np.full(size, -1, dtype=np.int64)
    active = np.arange(size)
    if conditioned:
        primed = 0
        for a in pattern.symbols[1:]:
            primed = int(table[primed, a])
        state = np.full(size, primed, dtype=np.int64)
        last = np.full(size, pattern.symbols[-1], dtype=np.int64)
        read = length - 1
    else:
        state = np.zeros(size, dtype=np.int64)
        last = draw(rng, first, size)
        state = table[state, last]
        read = 1
        hit = state == length
        tau[hit] = read - length + 1
        active = active[~hit]
        state, last = state[~hit], last[~hit]

    while len(active) and read - length + 1 < cap:
        if markov:
            symbols = draw_next(rng, rows, last)
        else:
            symbols = draw(rng, rows[0], len(active))
        state = table[state, symbols]
        last = symbols
        read += 1
        hit = state == length
        if hit.any():
            tau[active[hit]] = read - length + 1
            keep = ~hit
            active, state, last = active[keep], state[keep], last[keep]
    return tau


def run_tauf_batch(rng: np.random.Generator, goto: np.ndarray, increments: np.ndarray,
                   D: int, w: int, measure: MeasureSpec, size: int, cap: int) -> np.ndarray:
    """
    tau_f for one batch: windows 1, 2, ... are summed in units of 1/D

    goto is the window automaton and increments[node] is D f(window) for
    complete windows, 0 otherwise.
    """
    first, rows = cumulative_tables(measure)
    markov = measure.type == MeasureType.MARKOV
    tau = np.full(size, -1, dtype=np.int64)
    active = np.arange(size)

    last = draw(rng, first, size)
    node = goto[np.zeros(size, dtype=np.int64), last]
    residue = np.zeros(size, dtype=np.int64)
    read = 1
    while len(active) and read - w < cap:
        if markov:
            symbols = draw_next(rng, rows, last)
        else:
            symbols = draw(rng, rows[0], len(active))
        node = goto[node, symbols]
        last = symbols
        read += 1
        j = read - w
        if j >= 1:
            residue = residue + increments[node]
            hit = residue >= D
            if hit.any():
                tau[active[hit]] = j
                keep = ~hit
                active, node, last, residue = active[keep], node[keep], last[keep], residue[keep]
    return tau


def run_batches(batch_fn: Callable[[np.random.Generator, int], np.ndarray], N: int,
                seed: int, batch_size: int, jobs: int = 1,
                show_progress: bool = False) -> np.ndarray:
    """
    Run N trajectories in batches and concatenate them in batch order

    Batch b always uses the generator derived from (seed, b), so the result
    does not depend on the number of worker threads.
    """
    n_batches = math.ceil(N / batch_size)
    sizes = [min(batch_size, N - b * batch_size) for b in range(n_batches)]

    def job(b: int) -> np.ndarray:
        return batch_fn(batch_generator(seed, b), sizes[b])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            parts = list(tqdm(executor.map(job, range(n_batches)), total=n_batches,
                              desc="batches", disable=not show_progress))
    else:
        parts = [job(b) for b in tqdm(range(n_batches), desc="batches",
                                      disable=not show_progress)]
    logger.debug(f"{N} trajectories in {n_batches} batches ({BIT_GENERATOR}, seed={seed})")
    return np.concatenate(parts)


def ks_statistic(scaled: np.ndarray) -> float:
    """sup_t |empirical CDF - (1 - e^-t)|"""
    return float(stats.kstest(scaled, "expon").statistic)


def empirical_tail(samples: np.ndarray, ks: Sequence[int]) -> List[float]:
    return [float(np.mean(samples > k)) for k in ks]


def scaled_cdf(samples: np.ndarray, mu: float, t_grid: Sequence[float]) -> List[float]:
    scaled = mu * samples
    return [float(np.mean(scaled <= t)) for t in t_grid]
