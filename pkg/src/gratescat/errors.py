"""Exception hierarchy.

Validation errors mean the inputs never reached a solver (bad config,
inadmissible medium, mismatched truncations).  Solver errors mean a
numerical kernel refused to proceed (excluded frequency, failed or
ill-conditioned decomposition).  The CLI maps the former to exit code 1
and the latter to exit code 2.
"""


class GratescatError(Exception):
    """Base class for all package errors."""


class ValidationError(GratescatError):
    """Inputs are malformed or violate an admissibility assumption."""


class TruncationMismatch(ValidationError):
    """Operands were built over different mode sets."""


class NotOneDirectional(ValidationError):
    """The medium profile varies in more than one horizontal direction."""


class InsufficientDegree(ValidationError):
    """Requested reconstruction degree exceeds the available moments."""


class SolverError(GratescatError):
    """A numerical kernel could not produce a trustworthy result."""


class WoodAnomaly(SolverError):
    """A mode constant beta_n fell below the exclusion tolerance.

    Carries the offending mode index pair as ``.mode``.
    """

    def __init__(self, message, mode=None):
        super().__init__(message)
        self.mode = mode


class GridTooCoarse(ValidationError):
    """Sampling grid is below the alias-free bound for the truncation."""


class PointsTooClose(SolverError):
    """Source and evaluation point are too close for the modal series."""


class DivergenceViolation(SolverError):
    """A Rayleigh sequence breaks the divergence-free mode constraint."""


class EigenFailure(SolverError):
    """Dense eigen-decomposition did not converge."""


class IllConditionedBasis(SolverError):
    """Modal eigenbasis is numerically rank deficient."""


class SingularMatch(SolverError):
    """Layer matching system is near-singular (reported, not regularized)."""


class NormalizationDegenerate(SolverError):
    """Eigenfunction value at the normalization point is numerically zero."""


class FitInconclusive(SolverError):
    """Neither candidate shift convention matches the computed spectrum."""


class ZeroLambda(ValidationError):
    """Transverse factor requested for the excluded eigenvalue zero."""


class DegenerateDenominator(SolverError):
    """Quasi-momentum resonance in the transverse coefficient relation."""


class LambdaMismatch(ValidationError):
    """Transverse factor and eigenpair were built from inconsistent values."""


class A2Floor(SolverError):
    """Transverse overlap stayed below the retention floor."""
