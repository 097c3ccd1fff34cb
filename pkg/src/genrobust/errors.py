"""Exception hierarchy shared by every module of the package."""


class GenRobustError(Exception):
    """Base class for all package errors."""


class DomainError(GenRobustError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class UnboundedQuantileError(DomainError):
    """The requested Gaussian quantile is infinite (p is exactly 0 or 1)."""

    def __init__(self, p):
        self.p = p
        self.sign = 1 if p >= 1 else -1
        super().__init__(f"quantile of p={p} is {'+' if self.sign > 0 else '-'}inf")


class RangeError(GenRobustError, ValueError):
    """An argument lies outside the covered range of a tabulated object."""


class NoLatentRadiusError(RangeError):
    """No latent radius maps to the requested image distance (eta < omega(0))."""


class HypothesisViolation(GenRobustError, ValueError):
    """A precondition that a bound's derivation relies on does not hold."""


class DegenerateDistributionError(DomainError):
    """A class carries all of the probability mass."""


class CapabilityError(GenRobustError):
    """The model cannot provide what the operation needs (e.g. gradients)."""


class NonConvergenceError(GenRobustError):
    """An iterative search ended without producing a valid witness."""


class ProjectionError(NonConvergenceError):
    """Nearest-neighbour projection did not converge; carries the best iterate."""

    def __init__(self, message, best_z, best_distance):
        super().__init__(message)
        self.best_z = best_z
        self.best_distance = best_distance


class TrainingError(GenRobustError):
    """Training diverged."""

    def __init__(self, message, epoch=None, loss=None):
        super().__init__(message)
        self.epoch = epoch
        self.loss = loss


class InfeasibleTargetError(GenRobustError):
    """Every grid point of a bound search was infeasible for the target."""


class ConfigError(GenRobustError, ValueError):
    """An experiment configuration is malformed."""
