from .schemas import *

__all__ = [
    'to_fraction',
    'Rational',
    'MeasureType',
    'FamilyKind',
    'ArithmeticMode',
    'SampleKind',
    'OutputFormat',
    'ObservableKind',
    'Pattern',
    'MeasureSpec',
    'PatternFamily',
    'AvoidanceAutomaton',
    'SweepoutSeries',
    'HittingReturnDistributions',
    'IdentityReport',
    'CorrelationPolynomial',
    'RootResult',
    'EscapeRateReport',
    'RatioStudy',
    'LaplacePoint',
    'LaplaceReport',
    'LaplaceConsistency',
    'CriterionStudy',
    'PsiProfile',
    'PsiCertificate',
    'ClassMembership',
    'UpperBound',
    'LowerBound',
    'BoundsReport',
    'SubadditivityReport',
    'RholimRow',
    'RholimStudy',
    'Observable',
    'ObservableFamily',
    'ObservableSummary',
    'TaufSeries',
    'TaufIdentityReport',
    'TaufLaplacePoint',
    'TaufStudyRow',
    'TaufStudy',
    'SampleStats',
    'RunConfig',
    'LedgerEntry',
    'Report'
]
