"""Exception types raised by the library."""


class WFFilterError(Exception):
    """Base class for all library errors."""


class DomainError(WFFilterError, ValueError):
    """An argument lies outside the domain of an operation."""


class DistinctRatesError(DomainError):
    """Divided-difference nodes are not pairwise distinct."""


class DepthError(WFFilterError):
    """A lattice index exceeds the configured maximum depth."""


class NumericalError(WFFilterError, ArithmeticError):
    """A computed quantity violates a property it must satisfy exactly."""


class DegenerateMixtureError(WFFilterError):
    """A mixture has no mass left to normalize."""


class ImpossibleObservationError(WFFilterError):
    """An observation has zero predictive probability."""


class TruncationError(WFFilterError):
    """A truncated series does not reach the requested tail bound."""


class DegenerateWeightsError(WFFilterError):
    """All particle weights vanished."""
