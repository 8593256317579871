"""Exception types shared across the package."""


class BranchRulesError(ValueError):
    """Base class for errors raised by this package."""


class DataError(BranchRulesError):
    """Raised when input data cannot be loaded, parsed, or validated."""


class ExtractionError(BranchRulesError):
    """Raised when a rule-extraction precondition fails at runtime."""
