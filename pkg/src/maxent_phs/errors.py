"""Exception hierarchy shared by every module of the toolkit."""


class MaxentPhsError(Exception):
    """Base class for all errors raised by maxent_phs."""


class BudgetExceeded(MaxentPhsError):
    pass


class AlphabetMismatch(MaxentPhsError, ValueError):
    pass


class EmptyAccessibleSet(MaxentPhsError):
    pass


class DimensionMismatch(MaxentPhsError, ValueError):
    pass


class ZeroProbability(MaxentPhsError, ValueError):
    pass


class SolverError(MaxentPhsError):
    """Failure of a numerical solve (multipliers, inversions)."""


class TargetOutOfRange(SolverError):
    pass


class SingularCovariance(SolverError):
    def __init__(self, message, combination=None):
        super().__init__(message)
        # coefficients of the affine dependency among free functions
        self.combination = combination


class NoConvergence(SolverError):
    pass


class UndefinedTemperature(SolverError):
    pass


class EntropyOutOfRange(SolverError):
    pass


class BranchAmbiguity(SolverError):
    pass


class MissingIntensive(MaxentPhsError, KeyError):
    pass


class NotSkewSymmetric(MaxentPhsError, ValueError):
    def __init__(self, message, max_defect=float("nan")):
        super().__init__(message)
        self.max_defect = max_defect


class NonpositiveTemperature(MaxentPhsError, ValueError):
    pass


class PassivityViolation(MaxentPhsError):
    pass


class StateOutOfDomain(SolverError):
    pass


class ScenarioError(MaxentPhsError, ValueError):
    """Malformed or inconsistent scenario document."""
