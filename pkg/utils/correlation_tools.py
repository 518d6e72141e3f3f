import math
from fractions import Fraction
from typing import List, Optional

import numpy as np
import sympy as sp
from loguru import logger
from scipy.optimize import brentq

from models.schemas import CorrelationPolynomial, Pattern, RootResult
from utils.automaton import spectral_radius
from utils.errors import RootMismatchError
from utils.shift_tools import periods

z = sp.Symbol('z')


def correlation_polynomial(pattern: Pattern) -> CorrelationPolynomial:
    """h_A(z) = sum over periods p of z^(l-1-p)"""
    length = pattern.length
    found = periods(pattern.symbols)
    coefficients = [0] * length
    for p in found:
        coefficients[length - 1 - p] = 1
    return CorrelationPolynomial(length=length, periods=found, coefficients=coefficients)


def as_poly(corr: CorrelationPolynomial) -> sp.Poly:
    return sp.Poly(list(reversed(corr.coefficients)), z)


def gf_coefficients(corr: CorrelationPolynomial, q: int, N: int) -> List[int]:
    """
    Coefficients f(0..N) of F_A(z) = z h(z) / (1 + (z - q) h(z)) in powers of 1/z

    With w = 1/z both numerator and denominator become polynomials of degree
    at most l in w, and the expansion satisfies the integer recurrence
    f(n) = N_n - sum_{j=1..l} D_j f(n-j).
    """
    length = corr.length
    h = as_poly(corr)
    numerator = sp.Poly(z, z) * h
    denominator = sp.Poly(1, z) + sp.Poly(z - q, z) * h

    def reversed_coeffs(poly: sp.Poly) -> List[int]:
        return [int(poly.coeff_monomial(z ** (length - j))) for j in range(length + 1)]

    num = reversed_coeffs(numerator)
    den = reversed_coeffs(denominator)
    assert den[0] == 1

    f: List[int] = []
    for n in range(N + 1):
        value = num[n] if n <= length else 0
        for j in range(1, min(n, length) + 1):
            value -= den[j] * f[n - j]
        f.append(value)
    return f


def _g_coefficients(corr: CorrelationPolynomial, q: int) -> np.ndarray:
    """Coefficients of 1 + (z - q) h(z), highest power first"""
    h = np.array(list(reversed(corr.coefficients)), dtype=float)
    g = np.polymul([1.0, -float(q)], h)
    g[-1] += 1.0
    return g


def g_at_one(corr: CorrelationPolynomial, q: int) -> int:
    """1 + (1 - q) h(1), exact"""
    return 1 + (1 - q) * sum(corr.coefficients)


def dominant_root(corr: CorrelationPolynomial, q: int, transfer: np.ndarray,
                  tol: float = 1e-14, scan_points: int = 4096,
                  power_tol: float = 1e-12, power_max_iter: int = 200_000,
                  mismatch_tol: float = 1e-9) -> RootResult:
    """
    Largest real root of 1 + (z - q) h(z) in (1, q]

    Scans downward from z = q (where the polynomial equals 1) for the first
    sign change, refines it with brentq and a Newton polish, then checks it
    against the spectral radius of the avoidance counting matrix.

    Args:
        corr: Correlation polynomial of the pattern
        q: Alphabet size
        transfer: 0/1 counting matrix of the avoidance automaton

    Returns:
        RootResult; method is bisection_newton, boundary or spectral_fallback

    Raises:
        RootMismatchError: root and spectral radius disagree beyond mismatch_tol
    """
    coeffs = _g_coefficients(corr, q)
    deriv = np.polyder(coeffs)

    def g(x: float) -> float:
        return float(np.polyval(coeffs, x))

    radius, converged = spectral_radius(transfer, power_tol, power_max_iter)
    if not converged:
        logger.debug(f"Spectral radius via eigvals: {radius}")

    grid = np.linspace(float(q), 1.0, scan_points + 1)
    values = np.polyval(coeffs, grid)
    below = np.nonzero(values[:-1] <= 0)[0]

    root: Optional[float] = None
    method = "bisection_newton"
    if len(below) and below[0] > 0:
        i = below[0]
        lo, hi = grid[i], grid[i - 1]
        root = lo if values[i] == 0 else brentq(g, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
        for _ in range(3):
            slope = float(np.polyval(deriv, root))
            if slope == 0:
                break
            polished = root - g(root) / slope
            if not lo <= polished <= hi or abs(g(polished)) >= abs(g(root)):
                break
            root = polished
    elif g_at_one(corr, q) == 0:
        root = 1.0
        method = "boundary"

    if root is None:
        logger.warning(f"No sign change of 1 + (z-{q})h(z) in (1, {q}); "
                       f"using spectral radius {radius}")
        return RootResult(root=radius, method="spectral_fallback", spectral_radius=radius,
                          mismatch=0.0, fallback=True)

    mismatch = abs(root - radius)
    if mismatch > mismatch_tol:
        raise RootMismatchError(
            f"dominant root {root!r} and spectral radius {radius!r} differ by {mismatch:.3e}")
    return RootResult(root=root, method=method, spectral_radius=radius, mismatch=mismatch)


def root_expansion(corr: CorrelationPolynomial, q: int) -> Fraction:
    """q - 1/h(q) - h'(q)/h(q)^3, exact"""
    h = as_poly(corr)
    hq = Fraction(int(h.eval(q)))
    dq = Fraction(int(h.diff(z).eval(q)))
    return q - 1 / hq - dq / hq ** 3


def ratio_closed_limit(corr: CorrelationPolynomial, q: int) -> Fraction:
    """q^l / (q h(q))"""
    hq = int(as_poly(corr).eval(q))
    return Fraction(q ** corr.length, q * hq)


def closed_form_rate(root: float, q: int) -> float:
    """log q - log r_A"""
    return math.log(q) - math.log(root)


def tail_slope(log_values: np.ndarray, start: int) -> float:
    """Least-squares slope of -log s~(k) over k >= start"""
    k = np.arange(start, len(log_values), dtype=float)
    finite = np.isfinite(log_values[start:])
    slope, _ = np.polyfit(k[finite], -log_values[start:][finite], 1)
    return float(slope)
