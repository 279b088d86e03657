"""Exception types shared across the package."""


class TSVError(Exception):
    """Base class for domain errors raised by tsvlab."""


class DimensionMismatch(TSVError, ValueError):
    pass


class DegenerateSpectrum(TSVError, ValueError):
    """Eigenvalues closer than the relative degeneracy threshold."""


class NearOrthogonal(TSVError, ValueError):
    """Pre- and post-selected states are (numerically) orthogonal."""


class NoSolution(TSVError, ValueError):
    """Weak-value data that no two-state vector reproduces."""


class DeadBranch(TSVError, RuntimeError):
    """Post-selection probability too small to condition on."""


class UnderflowedBranch(TSVError, FloatingPointError):
    """Norm of a non-unitarily evolved state underflowed."""


class NotAnEigenstate(TSVError, ValueError):
    pass
