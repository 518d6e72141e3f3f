from typing import Optional


class RetlabError(Exception):
    """Base error; `code` is machine readable, `exit_code` is what the CLI returns"""

    code = "retlab_error"
    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message}


class UsageError(RetlabError):
    code = "usage"


class AlphabetMismatchError(RetlabError):
    code = "alphabet_mismatch"


class MeasureError(RetlabError):
    code = "invalid_measure"


class FamilyRangeError(RetlabError):
    code = "family_range"


class ClosedFormUnavailableError(RetlabError):
    code = "closed_form_unavailable"


class NotAMemberError(RetlabError):
    code = "not_a_member"


class SeriesTooShortError(RetlabError):
    """The stored series cannot reach the requested truncation tolerance"""

    code = "series_too_short"
    exit_code = 2

    def __init__(self, message: str, required_k: Optional[int] = None):
        super().__init__(message)
        self.required_k = required_k

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["required_k"] = self.required_k
        return data


class StateBudgetError(RetlabError):
    code = "state_budget"
    exit_code = 2

    def __init__(self, message: str, bound: int, budget: int):
        super().__init__(message)
        self.bound = bound
        self.budget = budget

    def to_dict(self) -> dict:
        data = super().to_dict()
        data.update(bound=self.bound, budget=self.budget)
        return data


class RootMismatchError(RetlabError):
    code = "root_mismatch"
    exit_code = 2
