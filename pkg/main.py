#!/usr/bin/env python3
"""
retlab - Main Pipeline
Return and hitting time statistics for shrinking cylinder targets
"""

import argparse
import json
import math
import sys
import time
from typing import Any, Dict, List, Optional, Tuple

from loguru import logger
from pydantic import ValidationError

from config.settings import settings
from config.ledger import LEDGER
from agents import (EscapeRateAgent, LaplaceAgent, MixingAgent,
                    MonteCarloAgent, ObservableAgent, ReportWriterAgent,
                    SweepoutAgent)
from models.schemas import (ArithmeticMode, EscapeRateReport, MeasureSpec,
                            ObservableFamily, ObservableKind, OutputFormat,
                            Pattern, RunConfig, SampleKind, SampleStats,
                            SweepoutSeries, to_fraction)
from utils.errors import RetlabError, UsageError
from utils.observable_tools import parse_observable
from utils.shift_tools import parse_family, parse_measure, parse_pattern

EXACT_COMMANDS = ("sweepout", "tauf")
CSV_COMMANDS = ("sweepout",)
DEFAULT_MEASURE = "uniform:2"
TAUF_IDENTITY_K = 256


def convergence_row(report: EscapeRateReport) -> Dict[str, Any]:
    """Escape-rate table row: l, mu, rho, ratio, sup_dev_exp, sup_dev_mu"""
    return {"l": report.l, "mu": report.mu_A, "rho": report.rho, "ratio": report.ratio,
            "sup_dev_exp": report.sup_dev_exp, "sup_dev_mu": report.sup_dev_mu}


class RetlabPipeline:
    """Main pipeline: one method per subcommand, each a pure function of the run config"""

    def __init__(self, config: RunConfig):
        self.config = config

        # Initialize all agents
        self.sweepout = SweepoutAgent(k_exact=config.k_exact)
        self.escape = EscapeRateAgent(self.sweepout)
        self.laplace = LaplaceAgent(self.sweepout, tol=config.tol)
        self.mixing = MixingAgent(self.sweepout, self.escape)
        self.monte_carlo = MonteCarloAgent(jobs=config.jobs)
        self.observables = ObservableAgent(tol=config.tol)
        self.writer = ReportWriterAgent()
        self.exact_rows: Optional[List[Dict[str, Any]]] = None

        logger.info("retlab pipeline initialized")

    # ------------------------------------------------------------- inputs

    def _measure(self) -> MeasureSpec:
        return parse_measure(self.config.measure or DEFAULT_MEASURE)

    def _pattern(self) -> Pattern:
        if not self.config.pattern:
            raise UsageError(f"{self.config.command} needs --pattern")
        return parse_pattern(self.config.pattern)

    def _family(self):
        return parse_family(self.config.family, self.config.lmin or 1, self.config.lmax)

    def _epsilon(self):
        if self.config.epsilon is None:
            raise UsageError(f"{self.config.command} needs --epsilon")
        return to_fraction(self.config.epsilon)

    def _K(self) -> int:
        return settings.k_default if self.config.K is None else self.config.K

    # ---------------------------------------------------------- execution

    def execute(self) -> Tuple[Any, List[Dict[str, Any]]]:
        """
        Run the configured subcommand

        Returns:
            (result for the JSON report, rows for the CSV table)
        """
        command = self.config.command
        logger.info("=" * 80)
        logger.info(f"RETLAB {command.upper()}")
        logger.info("=" * 80)

        start_time = time.time()
        result, rows = getattr(self, f"cmd_{command}")()
        elapsed = time.time() - start_time

        logger.success(f"{command} complete in {elapsed:.2f}s")
        return result, rows

    def _output_format(self) -> OutputFormat:
        if self.config.format is not None:
            return self.config.format
        return OutputFormat.CSV if self.config.command in CSV_COMMANDS else OutputFormat.JSON

    def emit(self, result: Any, rows: List[Dict[str, Any]]) -> Optional[str]:
        """Write the report in the configured format to --out or standard output"""
        if self._output_format() == OutputFormat.CSV:
            path = self.writer.write_csv(rows, self.config, self.config.out)
            if path and self.exact_rows is not None:
                self.writer.write_exact_csv(self.exact_rows, path)
            return path
        return self.writer.write_json(self.writer.envelope(self.config, result),
                                      self.config.out)

    # ------------------------------------------------------------ commands

    def cmd_sweepout(self):
        measure = self._measure()
        pattern = self._pattern()
        K = self._K()
        exact = self.config.exact
        if exact and K > self.sweepout.k_exact:
            raise UsageError(f"--exact needs K <= k_exact={self.sweepout.k_exact}; "
                             f"raise it with --k-exact")

        rational_table = (not exact and self._output_format() == OutputFormat.CSV
                          and self.config.out is not None)
        steps = 3 if rational_table else 2
        logger.info(f"[1/{steps}] Sweep-out series of {pattern} under {measure.label}, K={K}...")
        series = self.sweepout.sweepout_series(pattern, measure, K, exact=exact)

        logger.info(f"[2/{steps}] Hitting and return tails...")
        rows = self._series_rows(series, exact)
        if exact and K >= 1:
            identities = self.sweepout.check_identities(series)
            logger.info(f"Identity residuals: recursion={identities.recursion_residual}, "
                        f"convolution={identities.convolution_residual}")

        # a CSV file gets the rational table next to it; standard output holds one table
        if rational_table:
            K_rational = min(K, self.sweepout.k_exact)
            logger.info(f"[3/{steps}] Rational table to k={K_rational}...")
            rational = self.sweepout.sweepout_series(pattern, measure, K_rational, exact=True)
            self.exact_rows = self._series_rows(rational, exact=True)

        result = {
            "pattern": str(pattern),
            "measure": measure.label,
            "K": K,
            "mode": series.mode.value,
            "mu_A": series.mu_A,
            "rows": rows
        }
        return result, rows

    def _series_rows(self, series: SweepoutSeries, exact: bool) -> List[Dict[str, Any]]:
        """Rows k, s_tilde, hitting_tail, return_tail, c_k; the last k has no return tail"""
        K = series.K
        dist = self.sweepout.distributions(series) if K >= 1 else None
        if exact:
            s = series.exact_values
            hitting = dist.exact_hitting_tail if dist else s
            returning = dist.exact_return_tail if dist else []
            c = dist.exact_c if dist else []
        else:
            s = series.values
            hitting = dist.hitting_tail if dist else s
            returning = dist.return_tail if dist else []
            c = dist.c if dist else []
        return [{
            "k": k,
            "s_tilde": s[k],
            "hitting_tail": hitting[k],
            "return_tail": returning[k] if k < K else None,
            "c_k": c[k] if k < K else None
        } for k in range(K + 1)]

    def cmd_escape(self):
        measure = self._measure()
        K = self._K()
        if self.config.family:
            family = self._family()
            logger.info(f"[1/1] Ratio study along {family.label} "
                        f"(l={family.l_min}..{family.l_max})...")
            study = self.escape.ratio_study(family, measure, K)
            return study, [convergence_row(report) for report in study.reports]

        pattern = self._pattern()
        logger.info(f"[1/1] Escape rate of {pattern} under {measure.label}...")
        report = self.escape.escape_rate(pattern, measure, K=K)
        return report, [convergence_row(report)]

    def cmd_laplace(self):
        measure = self._measure()
        t_grid = self.config.t_grid
        tol = self.config.tol
        if self.config.family:
            family = self._family()
            logger.info(f"[1/1] Laplace criterion along {family.label} "
                        f"(l={family.l_min}..{family.l_max})...")
            study = self.laplace.criterion_report(family, measure, t_grid, tol)
            reports = study.reports
            result = study
        elif self.config.pattern:
            pattern = self._pattern()
            logger.info(f"[1/1] Laplace criterion for {pattern}...")
            result = self.laplace.report(pattern, measure, t_grid, tol)
            reports = [result]
        else:
            raise UsageError("laplace needs --pattern or --family")

        rows = []
        for report in reports:
            for point in report.points:
                rows.append({"pattern": report.pattern, "l": report.l, "mu": report.mu,
                             **point.model_dump()})
        return result, rows

    def cmd_classify(self):
        measure = self._measure()
        pattern = self._pattern()
        epsilon = self._epsilon()
        logger.info(f"[1/1] Classifying {pattern} at eps={epsilon}...")
        membership = self.mixing.classify(pattern, measure, epsilon)
        return membership, [membership.model_dump()]

    def cmd_bounds(self):
        measure = self._measure()
        pattern = self._pattern()
        epsilon = self._epsilon()
        logger.info(f"[1/1] Escape-rate bounds for {pattern} at eps={epsilon}...")
        report = self.mixing.bounds(pattern, measure, epsilon, K=self._K())
        rows = [{
            "k": lower.k,
            "lower": lower.bound,
            "vacuous": lower.vacuous,
            "rho": report.rho,
            "upper": report.upper.bound,
            "p_hat": lower.p_hat,
            "exact_cover": lower.exact_cover,
            "inclusion_exclusion_estimate": lower.inclusion_exclusion_estimate,
            "estimate_holds": lower.estimate_holds,
            "steps_hold": lower.steps_hold
        } for lower in report.lowers]
        return report, rows

    def cmd_rholim(self):
        measure = self._measure()
        if not self.config.family:
            raise UsageError("rholim needs --family")
        family = self._family()
        logger.info(f"[1/1] rho/mu along {family.label} (l={family.l_min}..{family.l_max})...")
        study = self.mixing.rholim_study(family, measure, self._K())
        return study, [row.model_dump() for row in study.rows]

    def _tail_comparison(self, stats: SampleStats, exact_tail: List[float]) -> List[Dict[str, Any]]:
        rows = []
        for k, empirical, exact in zip(stats.tail_k, stats.empirical_tail, exact_tail):
            sigma = math.sqrt(max(exact * (1.0 - exact), 0.0) / stats.n_valid)
            rows.append({"k": k, "empirical_tail": empirical, "exact_tail": exact,
                         "sigma": sigma, "within_3sigma": abs(empirical - exact) <= 3 * sigma + 1e-12})
        return rows

    def cmd_mc(self):
        measure = self._measure()
        pattern = self._pattern()
        if self.config.N is None:
            raise UsageError("mc needs --N")
        kind = self.config.kind or SampleKind.HITTING
        seed = settings.default_seed if self.config.seed is None else self.config.seed

        logger.info(f"[1/3] Sampling {self.config.N} {kind.value} times...")
        if kind == SampleKind.RETURN:
            stats = self.monte_carlo.sample_return(measure, pattern, self.config.N, seed)
        else:
            stats = self.monte_carlo.sample_hitting(measure, pattern, self.config.N, seed)

        logger.info("[2/3] Exact tails for comparison...")
        k_max = stats.tail_k[-1]
        series = self.sweepout.sweepout_series(pattern, measure, k_max + 1, exact=False)
        if kind == SampleKind.RETURN:
            exact_tail = self.sweepout.distributions(series).return_tail[:k_max + 1]
        else:
            exact_tail = series.values[:k_max + 1]
        rows = self._tail_comparison(stats, exact_tail)

        logger.info("[3/3] Writing samples...")
        if self.config.raw_samples:
            self.writer.write_raw_samples(stats.samples, self.config.raw_samples)

        result = {
            "pattern": str(pattern),
            "measure": measure.label,
            "stats": stats,
            "kac_target": 1.0,
            "kac_within_3sigma": abs(stats.kac_scaled - 1.0) <= 3 * stats.kac_sigma,
            "tails_within_3sigma": all(row["within_3sigma"] for row in rows),
            "tails": rows
        }
        return result, rows

    def cmd_tauf(self):
        measure = self._measure()
        if self.config.family:
            return self._tauf_family(measure)
        if not self.config.observable:
            raise UsageError("tauf needs --observable or --family")
        observable = parse_observable(self.config.observable)
        K = self._K()

        if self.config.exact:
            if self.config.N is not None:
                raise UsageError("sampled tau_f is float output; drop --exact to sample")
            logger.info(f"[1/2] Exact tau_f series to K={K}...")
            series = self.observables.exact_tauf_series(observable, measure, K, exact=True)
            logger.info("[2/2] tau_f identity check...")
            identity = self.observables.tauf_identity_check(observable, measure,
                                                            min(K, TAUF_IDENTITY_K))
            logger.info(f"tau_f identity residual: {identity.residual}")
            rows = [{"k": k, "s_f": value} for k, value in enumerate(series.exact_values)]
            result = {
                "observable": observable,
                "measure": measure.label,
                "K": K,
                "mode": ArithmeticMode.EXACT.value,
                "summary": series.summary,
                "rows": rows
            }
            return result, rows

        steps = 4 if self.config.N is not None else 3
        logger.info(f"[1/{steps}] tau_f series to K={K}...")
        series = self.observables.exact_tauf_series(observable, measure, K, exact=False)
        logger.info(f"[2/{steps}] tau_f identity check...")
        identity = self.observables.tauf_identity_check(observable, measure,
                                                        min(K, TAUF_IDENTITY_K))
        logger.info(f"[3/{steps}] tau_f Laplace transforms...")
        points = self.observables.tauf_laplace(observable, measure, self.config.t_grid,
                                               self.config.tol)
        rows = [{"k": k, "s_f": value} for k, value in enumerate(series.values)]
        result = {
            "observable": observable,
            "measure": measure.label,
            "K": K,
            "mode": ArithmeticMode.FLOAT.value,
            "summary": series.summary,
            "identity": identity,
            "laplace": points,
            "rows": rows
        }

        if self.config.N is not None:
            seed = settings.default_seed if self.config.seed is None else self.config.seed
            logger.info(f"[4/{steps}] Sampling {self.config.N} tau_f times...")
            stats = self.monte_carlo.sample_tauf(observable, measure, self.config.N, seed)
            k_max = stats.tail_k[-1]
            reference = self.observables.exact_tauf_series(observable, measure, k_max,
                                                           exact=False)
            tails = self._tail_comparison(stats, reference.values)
            result["sample"] = stats
            result["tails"] = tails
            result["tails_within_3sigma"] = all(row["within_3sigma"] for row in tails)
            if self.config.raw_samples:
                self.writer.write_raw_samples(stats.samples, self.config.raw_samples)
        return result, rows

    def _tauf_family(self, measure: MeasureSpec):
        family = ObservableFamily(kind=self.config.observable_kind or ObservableKind.INDICATOR,
                                  family=self._family())
        logger.info(f"[1/1] tau_f limit study, {family.kind.value} along "
                    f"{family.family.label}...")
        study = self.observables.tauf_limit_study(family, measure, self.config.t_grid,
                                                  self.config.tol)
        return study, [row.model_dump() for row in study.rows]

    def cmd_ledger(self):
        logger.info(f"[1/1] {len(LEDGER)} ledger entries")
        return LEDGER, [entry.model_dump() for entry in LEDGER]


class CliParser(argparse.ArgumentParser):
    """Parser that reports grammar errors as UsageError instead of exiting"""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> CliParser:
    """
    retlab [--config FILE] [--format json|csv] [--out PATH] [--jobs N]
           [--log-level LEVEL] <subcommand> [options]

    Unset flags are left out of the namespace so that --config values survive.
    """
    common = CliParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument('--config', help="JSON run configuration; flags win")
    common.add_argument('--format', choices=[f.value for f in OutputFormat])
    common.add_argument('--out', help="Output path (standard output when omitted)")
    common.add_argument('--jobs', type=int, help="Worker threads for sampling")
    common.add_argument('--log-level', dest='log_level')

    parser = CliParser(prog='retlab', parents=[common], argument_default=argparse.SUPPRESS,
                       description="Return and hitting time statistics for cylinder targets")
    subparsers = parser.add_subparsers(dest='command', required=True)

    def add(name: str, help_text: str) -> CliParser:
        sub = subparsers.add_parser(name, parents=[common], help=help_text,
                                    argument_default=argparse.SUPPRESS)
        if name != 'ledger':
            sub.add_argument('--measure', help="uniform:q | bernoulli:p0,p1,.. | markov:P00,P01;P10,P11")
        return sub

    def add_family(sub: CliParser):
        sub.add_argument('--family', help="constant:a | periodic:w | fibonacci | "
                                          "champernowne[:q] | explicit:w1,w2")
        sub.add_argument('--lmin', type=int)
        sub.add_argument('--lmax', type=int)

    sub = add('sweepout', "Sweep-out series with hitting and return tails")
    sub.add_argument('--pattern')
    sub.add_argument('--K', dest='K', type=int)
    sub.add_argument('--exact', action='store_true')
    sub.add_argument('--k-exact', dest='k_exact', type=int)

    sub = add('escape', "Escape rate, dominant root and rho/mu")
    sub.add_argument('--pattern')
    sub.add_argument('--K', dest='K', type=int)
    add_family(sub)

    sub = add('laplace', "Laplace form of the exponential-limit criterion")
    sub.add_argument('--pattern')
    add_family(sub)
    sub.add_argument('--t', dest='t_grid', type=float, nargs='+')
    sub.add_argument('--tol', type=float)

    sub = add('classify', "Membership in the class A_eps")
    sub.add_argument('--pattern')
    sub.add_argument('--epsilon', type=float)

    sub = add('bounds', "Upper and lower escape-rate bounds")
    sub.add_argument('--pattern')
    sub.add_argument('--epsilon', type=float)
    sub.add_argument('--K', dest='K', type=int)

    sub = add('rholim', "rho/mu table along a family with eps = 1/l")
    add_family(sub)
    sub.add_argument('--K', dest='K', type=int)

    sub = add('mc', "Monte Carlo hitting or return times")
    sub.add_argument('--pattern')
    sub.add_argument('--N', dest='N', type=int)
    sub.add_argument('--seed', type=int)
    sub.add_argument('--kind', choices=[SampleKind.HITTING.value, SampleKind.RETURN.value])
    sub.add_argument('--raw-samples', dest='raw_samples')

    sub = add('tauf', "Generalized hitting times of an observable")
    sub.add_argument('--observable', help="word:value,word:value")
    sub.add_argument('--K', dest='K', type=int)
    sub.add_argument('--exact', action='store_true')
    sub.add_argument('--N', dest='N', type=int)
    sub.add_argument('--seed', type=int)
    sub.add_argument('--raw-samples', dest='raw_samples')
    sub.add_argument('--t', dest='t_grid', type=float, nargs='+')
    sub.add_argument('--tol', type=float)
    add_family(sub)
    sub.add_argument('--observable-kind', dest='observable_kind',
                     choices=[k.value for k in ObservableKind])

    add('ledger', "Discrepancy ledger")
    return parser


def parse_config(argv: List[str]) -> RunConfig:
    """
    Merge the --config file with the command-line flags

    Raises:
        UsageError: bad grammar, unreadable config or invalid values
    """
    flags = vars(build_parser().parse_args(argv))
    merged: Dict[str, Any] = {}
    config_path = flags.pop('config', None)
    if config_path:
        merged.update(ReportWriterAgent().load_json(config_path))
    merged.update(flags)
    try:
        config = RunConfig.model_validate(merged)
    except ValidationError as e:
        raise UsageError(f"invalid run configuration: {e}") from e
    if config.exact and config.command not in EXACT_COMMANDS:
        raise UsageError(f"--exact is only available for {', '.join(EXACT_COMMANDS)}")
    return config


def setup_logging(level: Optional[str] = None):
    """Configure logging"""
    logger.remove()  # Remove default handler

    # Console handler
    logger.add(
        sys.stderr,
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | <level>{message}</level>",
        level=(level or settings.log_level).upper(),
        colorize=True
    )

    # File handler
    if settings.log_to_file:
        log_file = settings.logs_dir / f"retlab_{time.strftime('%Y%m%d_%H%M%S')}.log"
        logger.add(
            log_file,
            format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {message}",
            level="DEBUG",
            rotation="10 MB"
        )
        logger.info(f"Logging to: {log_file}")


def report_error(error: Dict[str, Any]):
    """One machine-readable JSON line on standard error"""
    sys.stderr.write(json.dumps({"error": error}) + "\n")
    sys.stderr.flush()


def run(argv: Optional[List[str]] = None) -> int:
    """
    Parse argv, run one subcommand and write its report

    Returns:
        0 on success, 1 on usage errors, 2 on computation-budget errors
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = parse_config(argv)
        setup_logging(config.log_level)
        pipeline = RetlabPipeline(config)
        result, rows = pipeline.execute()
        pipeline.emit(result, rows)
        return 0
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except RetlabError as e:
        logger.error(f"{e.code}: {e.message}")
        report_error(e.to_dict())
        return e.exit_code
    except ValidationError as e:
        logger.error(f"Invalid input: {e}")
        report_error({"code": UsageError.code, "message": str(e)})
        return UsageError.exit_code
    except Exception as e:
        logger.exception(f"Pipeline failed: {e}")
        report_error({"code": "internal", "message": str(e)})
        return 1


def main():
    """Main entry point"""
    sys.exit(run())


if __name__ == "__main__":
    main()
