"""Exception hierarchy shared across the package.

Two broad classes matter to callers: ``ValidationError`` (bad inputs,
CLI exit code 2) and ``NumericalError`` (a computation failed or did not
converge, CLI exit code 3).
"""


class HanamError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(HanamError):
    """Invalid input data or configuration."""

    def __init__(self, message, path=None, line=None):
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line


class NegativeEntryError(ValidationError):
    """Adjacency matrix contains a negative entry."""


class NonzeroDiagonalError(ValidationError):
    """Adjacency matrix has a nonzero diagonal entry."""


class BadShapeError(ValidationError):
    """Array shapes are inconsistent with the network or each other."""


class NumericalError(HanamError):
    """Base class for numerical failures (CLI exit code 3)."""


class NoConvergenceError(NumericalError):
    """Iterative scheme exhausted its iteration budget."""


class ChainDivergedError(NumericalError):
    """Sampler log posterior became non-finite."""


class RankDeficientError(NumericalError):
    """Matrix has insufficient rank for the requested operation."""


class DegenerateDrawsError(NumericalError):
    """All posterior draws identical; covariance MLE undefined."""


class NotPositiveDefiniteError(NumericalError):
    """Covariance iterate lost positive definiteness after ridge repair."""


class UnstableError(NumericalError):
    """Spectral stability |rho| * lambda1(A) < 1 violated."""


class FactorizationFailureError(NumericalError):
    """Covariance matrix numerically non-positive-definite."""


class RankDeficientInstrumentsError(NumericalError):
    """Two-stage least squares instrument matrix is rank deficient."""


class SingularSecondStageError(NumericalError):
    """Second-stage regressor matrix is singular."""


class AllStartsFailedError(NumericalError):
    """Every optimizer start ended with a non-finite objective."""


class IndefiniteHessianError(NumericalError):
    """Observed Hessian at the MAP is not positive definite."""

    def __init__(self, message, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues


class EmptyNetworkError(NumericalError):
    """Network generator produced a graph with no edges."""


class DivergingError(NumericalError):
    """Forward simulation exceeded the divergence threshold."""
