from fractions import Fraction
from pydantic import (BaseModel, BeforeValidator, ConfigDict, Field,
                      field_validator, model_validator)
from typing import Annotated, Any, Dict, List, Optional, Tuple, Union
from enum import Enum
from datetime import datetime

import numpy as np
import sympy as sp


def to_fraction(value: Any) -> Fraction:
    """Read ints, decimal literals, "a/b" strings and sympy rationals exactly"""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError("booleans are not probabilities")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        # repr keeps the decimal literal, so 0.9 reads as 9/10
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, sp.Rational):
        return Fraction(int(value.p), int(value.q))
    raise ValueError(f"cannot read {value!r} as a rational number")


Rational = Annotated[Fraction, BeforeValidator(to_fraction)]


class MeasureType(str, Enum):
    """Supported shift-invariant measures"""
    UNIFORM = "uniform"
    BERNOULLI = "bernoulli"
    MARKOV = "markov"


class FamilyKind(str, Enum):
    """Generators of shrinking cylinder families"""
    CONSTANT = "constant"
    PERIODIC = "periodic"
    FIBONACCI = "fibonacci"
    CHAMPERNOWNE = "champernowne"
    EXPLICIT = "explicit"


class ArithmeticMode(str, Enum):
    EXACT = "exact"
    FLOAT = "float"


class SampleKind(str, Enum):
    HITTING = "hitting"
    RETURN = "return"
    TAUF = "tauf"


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class ObservableKind(str, Enum):
    INDICATOR = "indicator"
    MIXED = "mixed"


# ---------------------------------------------------------------- shift core

class Pattern(BaseModel):
    """Cylinder target [a_1 ... a_l]"""
    model_config = ConfigDict(frozen=True)

    symbols: Tuple[int, ...] = Field(..., min_length=1)

    @field_validator('symbols')
    @classmethod
    def _non_negative(cls, v):
        if any(a < 0 for a in v):
            raise ValueError("pattern symbols must be non-negative")
        return v

    @property
    def length(self) -> int:
        return len(self.symbols)

    def __str__(self) -> str:
        return ''.join(str(a) for a in self.symbols)


class MeasureSpec(BaseModel):
    """Uniform(q) | Bernoulli(q, p) | Markov(q, P); pi is always computed"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    type: MeasureType
    q: int = Field(..., ge=2)
    p: Optional[Tuple[Rational, ...]] = None
    P: Optional[Tuple[Tuple[Rational, ...], ...]] = None
    pi: Optional[Tuple[Rational, ...]] = None

    @model_validator(mode='before')
    @classmethod
    def _stationary_vector(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        kind = data.get('type', '')
        if str(getattr(kind, 'value', kind)).lower() != MeasureType.MARKOV.value:
            return data
        P = data.get('P')
        if P is None:
            return data
        q = len(P)
        rows = [[to_fraction(x) for x in row] for row in P]
        if any(len(row) != q for row in rows):
            raise ValueError("Markov matrix must be square")
        # Solve pi (P - I) = 0 with sum(pi) = 1 exactly
        system = sp.Matrix([[sp.Rational(x.numerator, x.denominator) for x in row]
                            for row in rows]).T - sp.eye(q)
        system[q - 1, :] = sp.ones(1, q)
        rhs = sp.zeros(q, 1)
        rhs[q - 1, 0] = 1
        solution = system.LUsolve(rhs)
        data = dict(data)
        data['P'] = rows
        data['pi'] = [Fraction(int(s.p), int(s.q)) for s in solution]
        data.setdefault('q', q)
        return data

    @model_validator(mode='after')
    def _check(self) -> 'MeasureSpec':
        if self.type == MeasureType.UNIFORM:
            if self.p is not None or self.P is not None:
                raise ValueError("uniform measure takes no p or P")
        elif self.type == MeasureType.BERNOULLI:
            if self.p is None or len(self.p) != self.q:
                raise ValueError(f"Bernoulli measure needs a probability vector of length {self.q}")
            if any(x <= 0 for x in self.p):
                raise ValueError("Bernoulli probabilities must be strictly positive")
            if abs(float(sum(self.p)) - 1.0) > 1e-12:
                raise ValueError(f"Bernoulli probabilities sum to {float(sum(self.p))}, not 1")
        else:
            if self.P is None or len(self.P) != self.q:
                raise ValueError(f"Markov measure needs a {self.q}x{self.q} matrix")
            for row in self.P:
                if any(x <= 0 for x in row):
                    raise ValueError("Markov matrix entries must be strictly positive")
                if abs(float(sum(row)) - 1.0) > 1e-12:
                    raise ValueError(f"Markov row sums to {float(sum(row))}, not 1")
            P = np.array([[float(x) for x in row] for row in self.P])
            pi = np.array([float(x) for x in self.pi])
            if np.max(np.abs(pi @ P - pi)) > 1e-12:
                raise ValueError("stationary vector check failed")
        return self

    @property
    def label(self) -> str:
        if self.type == MeasureType.UNIFORM:
            return f"uniform:{self.q}"
        if self.type == MeasureType.BERNOULLI:
            return "bernoulli:" + ",".join(str(x) for x in self.p)
        return "markov:" + ";".join(",".join(str(x) for x in row) for row in self.P)


class PatternFamily(BaseModel):
    """Sequence of cylinders shrinking to a point"""
    kind: FamilyKind
    symbol: int = 0
    word: Optional[Tuple[int, ...]] = None
    q: int = Field(2, ge=2)
    patterns: List[Pattern] = []
    l_min: int = Field(1, ge=1)
    l_max: Optional[int] = None

    @model_validator(mode='after')
    def _check(self) -> 'PatternFamily':
        if self.kind == FamilyKind.PERIODIC and not self.word:
            raise ValueError("periodic family needs a word")
        if self.kind == FamilyKind.EXPLICIT:
            if not self.patterns:
                raise ValueError("explicit family needs at least one pattern")
            if self.l_max is None:
                self.l_max = len(self.patterns)
        if self.l_max is None:
            self.l_max = self.l_min
        if self.l_max < self.l_min:
            raise ValueError(f"empty range {self.l_min}..{self.l_max}")
        return self

    @property
    def period(self) -> Optional[int]:
        if self.kind == FamilyKind.CONSTANT:
            return 1
        if self.kind == FamilyKind.PERIODIC:
            return len(self.word)
        return None

    @property
    def label(self) -> str:
        if self.kind == FamilyKind.CONSTANT:
            return f"constant:{self.symbol}"
        if self.kind == FamilyKind.PERIODIC:
            return "periodic:" + ''.join(str(a) for a in self.word)
        if self.kind == FamilyKind.EXPLICIT:
            return "explicit:" + ",".join(str(p) for p in self.patterns)
        if self.kind == FamilyKind.CHAMPERNOWNE:
            return f"champernowne:{self.q}"
        return self.kind.value


# ------------------------------------------------------- avoidance automaton

class AvoidanceAutomaton(BaseModel):
    """KMP prefix automaton; state l means the pattern occurred"""
    pattern: Pattern
    q: int
    failure: List[int]
    transitions: List[List[int]]  # states 0..l-1 by symbol


class SweepoutSeries(BaseModel):
    """s~(0..K) with log-space floats and, in exact mode, rationals"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    pattern: Pattern
    measure: MeasureSpec
    K: int
    mu_A: Rational
    mode: ArithmeticMode
    values: List[float]
    log_values: List[float]
    exact_values: Optional[List[Rational]] = None
    exact_through: Optional[int] = None
    created_at: datetime = Field(default_factory=datetime.now, exclude=True)

    @property
    def is_exact(self) -> bool:
        return self.exact_values is not None and self.exact_through == self.K

    def sequence(self) -> list:
        """Exact values when the whole range is rational, floats otherwise"""
        return self.exact_values if self.is_exact else self.values


class HittingReturnDistributions(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    K: int
    hitting_tail: List[float]
    return_tail: List[float]
    c: List[float]
    sup_c: float
    exact_hitting_tail: Optional[List[Rational]] = None
    exact_return_tail: Optional[List[Rational]] = None
    exact_c: Optional[List[Rational]] = None
    exact_sup_c: Optional[Rational] = None


class IdentityReport(BaseModel):
    """Residuals of the sweep-out identities; zero in rational mode"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    pattern: str
    K: int
    exact: bool
    return_identity_residual: float
    recursion_residual: float
    convolution_residual: float
    uniform_bridge_residual: Optional[float] = None
    monotone: bool
    lower_bound_holds: bool
    kac_partial_sum: float
    kac_tail: float
    kac_target: float
    kac_bracket_holds: bool


# ------------------------------------------------------ correlation analysis

class CorrelationPolynomial(BaseModel):
    """h_A(z) = sum over periods p of z^(l-1-p)"""
    length: int
    periods: List[int]
    coefficients: List[int]  # index = power of z

    @property
    def degree(self) -> int:
        return self.length - 1


class RootResult(BaseModel):
    root: float
    method: str  # bisection_newton | boundary | spectral_fallback
    spectral_radius: float
    mismatch: float
    fallback: bool = False


class EscapeRateReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    pattern: str
    l: int
    q: int
    measure: str
    K: int
    root: Optional[float] = None
    root_method: Optional[str] = None
    root_expansion: Optional[float] = None
    root_expansion_error: Optional[float] = None
    rho_closed: Optional[float] = None
    rho_spectral: float
    rho_fit: float
    fit_deviation: float
    mu_A: float
    mu_A_exact: Rational
    rho: float
    ratio: float
    ratio_closed_limit: Rational
    sup_dev_exp: float
    sup_dev_mu: float


class RatioStudy(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    family: str
    measure: str
    reports: List[EscapeRateReport]
    ratio_monotone: bool
    sup_dev_monotone: bool
    period: Optional[int] = None
    measured_limit: Optional[float] = None
    predicted_limit: Optional[float] = None
    stated_limit: Optional[float] = None
    discrepancy: Optional[bool] = None


# --------------------------------------------------------- laplace criterion

class LaplacePoint(BaseModel):
    t: float = Field(..., gt=0)
    series_value: float
    target: float
    deviation: float
    phi_return: float
    phi_hitting: float
    K_used: int
    tail_bound: float


class LaplaceReport(BaseModel):
    pattern: str
    l: int
    mu: float
    points: List[LaplacePoint]
    sup_deviation: float
    c_sup: float
    c_tilde: float
    hsv_c_tilde_bound: float
    hsv_c_bound: float
    hsv_holds: bool
    K_used: int


class LaplaceConsistency(BaseModel):
    t: float
    series_value: float
    tail_bound: float
    phi_return: float
    phi_return_direct: float
    phi_hitting: float
    phi_hitting_direct: float
    return_residual: float
    hitting_residual: float


class CriterionStudy(BaseModel):
    family: str
    measure: str
    t_grid: List[float]
    reports: List[LaplaceReport]
    sup_deviation_monotone: bool


# ---------------------------------------------------------------- psi mixing

class PsiProfile(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    measure: str
    k_max: int
    psi: List[float]
    psi_exact: List[Rational]
    psi_max: float


class PsiCertificate(BaseModel):
    checked: int
    violations: int
    worst_ratio: float
    passed: bool


class ClassMembership(BaseModel):
    """Definition of the class A_eps; w_A = n_A + ell_A"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    pattern: str
    epsilon: Rational
    n_A: int
    mu_A: Rational
    ell_A: Optional[int] = None
    w_A: Optional[int] = None
    psi_ell: Optional[Rational] = None
    condition_mixing: bool
    condition_size: bool
    condition_overlap: bool
    size_value: Rational
    overlap_sup: Rational
    overlap_value: Rational
    q_A: Optional[Rational] = None
    member: bool
    reason: Optional[str] = None


class UpperBound(BaseModel):
    bound: float
    q_A: float
    steps_checked: int
    steps_hold: bool
    worst_step_slack: float


class LowerBound(BaseModel):
    k: int
    bound: float
    vacuous: bool
    p_hat: float
    exact_cover: float
    inclusion_exclusion_estimate: float
    estimate_holds: bool
    steps_checked: int
    steps_hold: bool


class BoundsReport(BaseModel):
    membership: ClassMembership
    rho: float
    upper: UpperBound
    lowers: List[LowerBound]
    best_lower: LowerBound
    sandwich_holds: bool
    rate_oscillation: float


class SubadditivityReport(BaseModel):
    holds: bool
    worst_slack: float
    checked: int
    psi_max: float


class RholimRow(BaseModel):
    n: int
    l: int
    mu: float
    rho: float
    lower: Optional[float] = None
    upper: Optional[float] = None
    ratio: float
    member: bool
    reason: Optional[str] = None


class RholimStudy(BaseModel):
    family: str
    measure: str
    rows: List[RholimRow]
    sandwich_holds: bool
    deviation_monotone: bool
    final_deviation: Optional[float] = Field(None, description="|rho/mu - 1| of the last member row")


# ------------------------------------------------- observables and sampling

class Observable(BaseModel):
    """Step function f on words of length `depth`; unlisted words map to 0"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    depth: int = Field(..., ge=1)
    values: Dict[str, Rational]

    @model_validator(mode='after')
    def _check(self) -> 'Observable':
        for word, value in self.values.items():
            if len(word) != self.depth or not word.isdigit():
                raise ValueError(f"word {word!r} does not have depth {self.depth}")
            if value < 0 or value > 1:
                raise ValueError(f"value {value} of {word!r} outside [0, 1]")
        if not any(v > 0 for v in self.values.values()):
            raise ValueError("observable vanishes identically")
        return self

    @property
    def support(self) -> Dict[str, Fraction]:
        return {w: v for w, v in self.values.items() if v > 0}


class ObservableFamily(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: ObservableKind = ObservableKind.INDICATOR
    family: PatternFamily
    sibling_value: Rational = Fraction(1, 4)


class ObservableSummary(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    depth: int
    support_size: int
    denominator: int
    eps_f: Rational
    mu_f_one: Rational
    hypothesis_ratio: Rational


class TaufSeries(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    observable: Observable
    measure: MeasureSpec
    K: int
    mode: ArithmeticMode
    summary: ObservableSummary
    values: List[float]
    exact_values: Optional[List[Rational]] = None


class TaufIdentityReport(BaseModel):
    K: int
    residual: float
    exact: bool
    k0_consistent: bool


class TaufLaplacePoint(BaseModel):
    t: float
    series_value: float
    target: float
    deviation: float
    phi_hitting: float
    phi_hitting_direct: float
    phi_return: float
    phi_return_direct: float


class TaufStudyRow(BaseModel):
    n: int
    eps_f: float
    hypothesis_ratio: float
    sup_deviation: float
    sup_dev_law_X: float
    sup_dev_law_A: float
    K_used: int


class TaufStudy(BaseModel):
    kind: ObservableKind
    family: str
    measure: str
    rows: List[TaufStudyRow]
    deviation_monotone: bool


class SampleStats(BaseModel):
    """Summary of N simulated trajectories; raw samples are kept out of dumps"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: SampleKind
    N: int = Field(..., ge=1)
    seed: int
    mu: float
    n_valid: int
    capped: int
    step_cap: int
    mean: float
    variance: float
    tail_k: List[int]
    empirical_tail: List[float]
    t_grid: List[float]
    scaled_cdf: List[float]
    ks_stat: float = Field(..., ge=0, le=1)
    kac_mean: float
    kac_scaled: float
    kac_sigma: float
    samples: Optional[np.ndarray] = Field(None, exclude=True, repr=False)


# ----------------------------------------------------------------- CLI plumbing

class RunConfig(BaseModel):
    """Effective configuration of one CLI run; unknown keys are rejected"""
    model_config = ConfigDict(extra='forbid')

    command: str
    measure: Optional[Union[str, Dict[str, Any]]] = None
    pattern: Optional[str] = None
    family: Optional[str] = None
    lmin: Optional[int] = Field(None, ge=1)
    lmax: Optional[int] = Field(None, ge=1)
    K: Optional[int] = Field(None, ge=0)
    k_exact: Optional[int] = Field(None, ge=0)
    t_grid: Optional[List[float]] = None
    tol: Optional[float] = Field(None, gt=0)
    epsilon: Optional[float] = Field(None, gt=0)
    N: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = None
    kind: Optional[SampleKind] = None
    observable: Optional[Union[str, Dict[str, Any]]] = None
    observable_kind: Optional[ObservableKind] = None
    exact: bool = False
    format: Optional[OutputFormat] = None
    out: Optional[str] = None
    raw_samples: Optional[str] = None
    jobs: int = Field(1, ge=1)
    log_level: Optional[str] = None

    @field_validator('t_grid')
    @classmethod
    def _positive_times(cls, v):
        if v is not None and any(t <= 0 for t in v):
            raise ValueError("t grid must be strictly positive")
        return v


class LedgerEntry(BaseModel):
    key: str
    topic: str
    stated: str
    adopted: str
    evidence: str


class Report(BaseModel):
    """Envelope written for every subcommand (no timestamp)"""
    command: str
    config: Dict[str, Any]
    result: Any
