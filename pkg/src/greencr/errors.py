"""Exception types raised by the library."""


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class DegenerateInputError(DomainError):
    """Probabilities that make a posterior's denominator vanish."""


class InfeasibleThetaError(DomainError):
    """A harvesting ratio outside the user's open feasible interval."""


class InfeasibleUserError(DomainError):
    """A user whose feasible harvesting interval is empty."""


class NoSolutionError(DomainError):
    """An equation has no real solution on the requested branch."""


class PreconditionError(DomainError):
    """A solver precondition (such as H*chi > 1) does not hold."""


class OracleSizeError(ValueError):
    """An instance is too large for brute-force enumeration."""


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UsageError(ValueError):
    """A request the command line or an experiment runner cannot interpret."""
