"""Exception hierarchy shared by all modules."""


class HermitianMAError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(HermitianMAError):
    """Invalid domain, metric, tolerance or run configuration."""


class DomainError(HermitianMAError):
    """A grid invariant was violated (e.g. missing stencil neighbour)."""


class InvalidMetricError(HermitianMAError):
    """The Hermitian metric is not positive definite somewhere."""


class UnsupportedDomainError(HermitianMAError):
    """Operation not available on this kind of domain."""


class IterationLimitError(HermitianMAError):
    """An iterative solver hit its sweep budget before converging."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BracketError(HermitianMAError):
    """Per-node root bracket failed: the scalar map was not monotone."""


class MonotonicityError(HermitianMAError):
    """An iteration that must be monotone moved the wrong way beyond tolerance."""

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


class SubsolutionError(HermitianMAError):
    """A supplied subsolution failed the subsolution check."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class BarrierError(HermitianMAError):
    """Barrier construction failed (degenerate defining-function gradient)."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class GenerationError(HermitianMAError):
    """A manufactured problem could not be generated stably."""


class DominationError(HermitianMAError):
    """A measure is not dominated by the Monge-Ampere measure of the witness."""

    def __init__(self, message, ball=None):
        super().__init__(message)
        self.ball = ball


class UniquenessError(HermitianMAError):
    """Two solver paths for a problem with a unique solution disagree."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap
