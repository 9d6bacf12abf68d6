"""Exception types raised across the package."""

from __future__ import annotations


class CCError(ValueError):
    """Base class for invalid inputs and failed computations."""


class DimensionError(CCError):
    """Parameters, points or predictors disagree on their dimension."""


class ModeTieError(CCError):
    """The largest mean parameter is not unique, so the mode is not a single vertex."""

    def __init__(self, tied: list[int]):
        self.tied = tied
        super().__init__(f"mode is not unique: components {tied} share the maximal lambda")


class BudgetExceededError(CCError):
    """A rejection sampler used its whole proposal budget without accepting."""

    def __init__(self, sampler: str, budget: int, params, accepted: int = 0):
        self.sampler = sampler
        self.budget = budget
        self.params = params
        self.accepted = accepted
        super().__init__(
            f"{sampler} sampler exceeded {budget} proposals for one sample "
            f"(accepted {accepted} so far) at parameters {[float(p) for p in params]}"
        )


class BoundaryError(CCError):
    """The data average lies on a face of the simplex; the MLE is at infinity."""

    def __init__(self, zero_components: list[int], xbar):
        self.zero_components = zero_components
        self.xbar = xbar
        super().__init__(
            "maximum likelihood estimate diverges: the data average is zero in "
            f"components {zero_components}, so the fit tends to the face where they vanish"
        )


class NonFiniteLossError(CCError):
    """The regression objective became non-finite."""

    def __init__(self, row: int, detail: str = ""):
        self.row = row
        super().__init__(f"non-finite log-likelihood at row {row}{': ' + detail if detail else ''}")
