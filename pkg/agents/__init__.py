from .sweepout_agent import SweepoutAgent
from .escape_rate_agent import EscapeRateAgent
from .laplace_agent import LaplaceAgent
from .mixing_agent import MixingAgent
from .monte_carlo_agent import MonteCarloAgent
from .observable_agent import ObservableAgent
from .report_writer import ReportWriterAgent

__all__ = [
    'SweepoutAgent',
    'EscapeRateAgent',
    'LaplaceAgent',
    'MixingAgent',
    'MonteCarloAgent',
    'ObservableAgent',
    'ReportWriterAgent'
]
