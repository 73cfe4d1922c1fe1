"""Exception types shared across the package."""


class RevsmoothError(Exception):
    """Base class for all package errors."""


class AuditFailed(RevsmoothError):
    """Perturbation derivative audit found a diverging ratio.

    Carries the witness (j, k, x, theta) of the worst violation.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class AuditRequired(RevsmoothError):
    """Operator assembly requested for a surface spec that was never audited."""


class NonFiniteSymbol(RevsmoothError):
    """A Fourier multiplier evaluated to NaN/Inf on the dual lattice."""


class GridTooLarge(RevsmoothError):
    """Dense quantization requested beyond the configured dense cap."""


class OrderUnavailable(RevsmoothError):
    """Symbol derivative requested beyond the order the primitives expose."""


class ResolutionTooCoarse(RevsmoothError):
    """Cutoff scales are not resolvable on the requested grid."""


class KrylovBreakdown(RevsmoothError):
    """Non-finite values appeared inside the Krylov recursion."""


class UnitarityLost(RevsmoothError):
    """Norm drift of the propagated state exceeded tolerance."""


class BoundaryMassExceeded(RevsmoothError):
    """Too much mass reached the outer margin of the periodic x-box."""


class DomainTooSmall(RevsmoothError):
    """Oscillator box does not contain the classical turning point with margin."""


class NotConverged(RevsmoothError):
    """Eigenvalues failed the (L1, N1)-doubling agreement test."""


class EmptyRegion(RevsmoothError):
    """A phase-space scan region contains no sample points."""


class SubspaceTooSmall(RevsmoothError):
    """Microlocal subspace dimension below the minimum."""


class IllConditionedGram(RevsmoothError):
    """Gram matrix of the subspace basis is numerically singular."""


class ConfigError(RevsmoothError):
    """Configuration file is malformed or violates the schema."""
