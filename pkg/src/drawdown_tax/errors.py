"""Exception types shared across the package."""


class DrawdownTaxError(Exception):
    """Base class for all package errors."""


class DomainError(DrawdownTaxError, ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class SingularInputError(DomainError):
    """The shifted argument x - xi(x) reached zero where a ratio of W is needed."""


class AssumptionViolated(DrawdownTaxError):
    """The sign function g changes sign more than once at grid resolution."""

    def __init__(self, message, pattern=None):
        super().__init__(message)
        self.pattern = pattern


class InconsistencyError(DrawdownTaxError):
    """An internal invariant that should hold by construction failed."""


class ConfigError(DrawdownTaxError, ValueError):
    """Invalid run configuration. ``problems`` lists every violated constraint."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
