"""Exception hierarchy shared by all modules."""


class HarnackLabError(Exception):
    """Base class for every error raised by this package."""


class GridError(HarnackLabError, ValueError):
    pass


class PotentialError(HarnackLabError, ValueError):
    pass


class DomainError(HarnackLabError, ValueError):
    """Argument outside the domain of a closed-form expression."""


class CFLError(HarnackLabError, ValueError):
    pass


class PositivityError(HarnackLabError, ValueError):
    pass


class SolverDivergence(HarnackLabError, RuntimeError):
    pass


class MissingSnapshot(HarnackLabError, KeyError):
    pass


class HypothesisError(HarnackLabError):
    """A theorem hypothesis failed its numerical audit.

    The offending audit (if any) is kept in ``audit`` so callers can report it.
    """

    def __init__(self, message, audit=None):
        super().__init__(message)
        self.audit = audit


class NotSteadyError(HarnackLabError):
    pass


class CurveError(HarnackLabError):
    pass


class SelfIntersectionError(CurveError):
    pass


class CurveCollapseError(CurveError):
    pass


class ConfigError(HarnackLabError):
    """Configuration problems, collected rather than raised one at a time."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))
