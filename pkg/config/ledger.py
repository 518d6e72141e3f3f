# Discrepancy ledger: statements of the source derivation that fail exact
# computation, and what retlab does instead. Printed by `retlab ledger`.

from models.schemas import LedgerEntry


SWEEPOUT_INDEX = LedgerEntry(
    key="sweepout_index",
    topic="sweep-out series vs avoidance counts",
    stated="s~(k) = q^-(k+l) f_A(k+l)",
    adopted="s~(k) = q^-(k+l-1) f_A(k+l-1)",
    evidence="A='0', q=2, k=1: brute force gives 1/2, the stated index gives 1/4"
)

PERIODIC_LIMIT = LedgerEntry(
    key="periodic_limit_sign",
    topic="rho/mu along prefixes of a period-m point",
    stated="limit 1 + q^-m",
    adopted="limit 1 - q^-m, from q^l / (q h_A(q)) with h_A(q) -> q^(l-1) / (1 - q^-m)",
    evidence="constant:0 under uniform:2, l=20: exact rho/mu = 0.5000 to 1e-3"
)

WINDOW_RENAMING = LedgerEntry(
    key="window_symbol",
    topic="class A_eps window length",
    stated="r_A = n_A + ell_A",
    adopted="w_A = n_A + ell_A",
    evidence="r_A already names the dominant root of the avoidance generating function"
)

PHI_RETURN_VALUE = LedgerEntry(
    key="phi_return_example",
    topic="phi_return for A='0', uniform:2, t=1",
    stated="0.438915",
    adopted="mu / (e^(mu t) - 1 + mu) = 0.435268",
    evidence="c_A vanishes for A='0', so phi_return = phi_hitting; "
             "formula and direct sum agree to 1e-12"
)

FIBONACCI_CLASS = LedgerEntry(
    key="fibonacci_membership",
    topic="classify FibonacciWord prefix l=10 at eps=0.1",
    stated="member with ell=0, w=10, overlap sup 2^-10",
    adopted="non-member: prefix 0100101001 has periods 5 and 8, overlap value 10 * 2^-5 = 0.3125",
    evidence="the stated member values hold for the aperiodic word 0000000001"
)

FIBONACCI_MONOTONE = LedgerEntry(
    key="fibonacci_monotonicity",
    topic="|rho/mu - 1| and Laplace deviation along Fibonacci prefixes",
    stated="monotone decreasing in l",
    adopted="monotone flag reported, end-point tolerances asserted",
    evidence="new periods appear as l crosses Fibonacci numbers; the ratio deviation rises from l=9 to l=10"
)

ESCAPE_VALUE = LedgerEntry(
    key="escape_example",
    topic="escape rate of A='11' under uniform:2",
    stated="about 0.2131301",
    adopted="log 2 - log phi = 0.2119354",
    evidence="the dominant root of z^2 - z - 1 is the golden ratio phi"
)

KS_VALUE = LedgerEntry(
    key="ks_example",
    topic="KS distance of mu tau vs Exp(1) for A='0', uniform:2",
    stated="about 0.11",
    adopted="about 0.39",
    evidence="the scaled geometric law jumps from 0 to 1/2 at t=1/2"
)

LEDGER = [
    SWEEPOUT_INDEX,
    PERIODIC_LIMIT,
    WINDOW_RENAMING,
    PHI_RETURN_VALUE,
    FIBONACCI_CLASS,
    FIBONACCI_MONOTONE,
    KS_VALUE,
    ESCAPE_VALUE,
]
