"""Exception types shared across the package."""


class SjfaError(Exception):
    """Base class for all package-specific errors."""


class NonFiniteTrajectory(SjfaError):
    """Priority trajectory integration produced a non-finite value."""


class LipschitzViolation(SjfaError):
    """A custom aging rule violates its declared Lipschitz constant."""


class OutOfHorizon(SjfaError):
    """A measure path was evaluated beyond its time horizon."""


class NotMonotone(SjfaError):
    """Input data required to be nondecreasing in time is not."""


class LevelOrder(SjfaError):
    """Priority levels must be strictly increasing."""


class QuadratureFailure(SjfaError):
    """Adaptive quadrature did not reach the requested tolerance."""


class DomainError(SjfaError):
    """A closed-form expression was evaluated outside its stated regime."""


class BranchGap(SjfaError):
    """No branch of a piecewise closed form matched; indicates a bug."""


class ConfigError(SjfaError):
    """A run configuration is invalid."""
