from .errors import (RetlabError, UsageError, AlphabetMismatchError, MeasureError,
                     FamilyRangeError, ClosedFormUnavailableError, NotAMemberError,
                     SeriesTooShortError, StateBudgetError, RootMismatchError)
from .shift_tools import parse_pattern, parse_measure, parse_family
from .observable_tools import parse_observable

__all__ = [
    'RetlabError',
    'UsageError',
    'AlphabetMismatchError',
    'MeasureError',
    'FamilyRangeError',
    'ClosedFormUnavailableError',
    'NotAMemberError',
    'SeriesTooShortError',
    'StateBudgetError',
    'RootMismatchError',
    'parse_pattern',
    'parse_measure',
    'parse_family',
    'parse_observable'
]
