"""Exception hierarchy shared by the analytic engine, simulator and CLI."""


class CacheModelError(Exception):
    """Base class for every error raised by :mod:`cachedyn`."""


class DomainError(CacheModelError, ValueError):
    """An argument lies outside the domain of the operation."""


class NoSolutionError(CacheModelError):
    """A requested parameterisation cannot be attained."""


class QuadratureError(CacheModelError):
    """Adaptive quadrature failed to reach the requested tolerance.

    Attributes
    ----------
    estimate : float
        Last estimate of the integral.
    error : float
        Achieved error estimate (difference between the two finest levels).
    """

    def __init__(self, message, estimate=float("nan"), error=float("nan")):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class BracketError(CacheModelError):
    """Bracket expansion for a monotone root search did not succeed."""


class UnsupportedPolicyError(CacheModelError):
    """The requested analysis is not available for this policy."""


class InfeasibleMomentsError(CacheModelError):
    """No member of the distribution class matches the given moments."""


class AmbiguousStrategyError(CacheModelError):
    """Policy and replication strategy combine ambiguously."""


class TopologyError(CacheModelError):
    """Topology is malformed or outside what the analytic solver supports."""


class MemoryGuardError(CacheModelError):
    """Simulation would exceed the configured memory budget."""


class ScenarioError(CacheModelError):
    """Scenario file is unreadable or violates the schema.

    Attributes
    ----------
    path : str
        Dotted path of the offending field (empty for file-level errors).
    """

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
