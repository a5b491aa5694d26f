"""Exception types shared across the package."""


class HfsemError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefiniteError(HfsemError):
    """A matrix that must be positive definite is not.

    Raised by Cholesky-based routines.  During optimization this is a
    recoverable signal (the parameter is outside the admissible region),
    not a crash.
    """


class SingularStructureError(HfsemError):
    """The structural matrix I - B is numerically singular."""


class RankDeficientError(HfsemError):
    """A Jacobian that must have full column rank does not."""


class AllStartsFailedError(HfsemError):
    """Every optimization start failed to produce a usable fit."""


class SpecError(HfsemError):
    """A model specification is malformed or inconsistent."""
