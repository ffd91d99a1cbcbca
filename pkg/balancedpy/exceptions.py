from numpy.linalg import LinAlgError


class BalancedError(Exception):
    """Base error for balancedpy."""


class ConfigError(BalancedError, ValueError):
    """An experiment configuration is malformed or out of range."""


class InvalidMeasure(BalancedError, ValueError):
    """Masses are negative, do not sum to one, or support points repeat."""


class EmptyInput(BalancedError, ValueError):
    """An operation that needs at least one point received none."""


class EvaluationError(BalancedError):
    """A basis function could not be evaluated at the requested point."""


class UnsupportedPoint(BalancedError):
    """A density ratio was requested at a point the reference measure does not charge."""


class DegenerateFamily(BalancedError):
    """The Gram matrix of a basis is numerically rank deficient under the measure."""


class SingularGram(BalancedError, LinAlgError):
    """A Gram matrix is too close to singular to be factored."""


class NotGood(BalancedError):
    """The Gram spectrum of a design falls outside [0.75, 1.25]."""


class InfiniteConditionNumber(BalancedError):
    """The sampling measure misses a point the reference measure charges."""


class BarrierViolation(BalancedError, FloatingPointError):
    """The barrier invariant l < lambda(B) < u failed during a BSS round."""


class RoundLimitExceeded(BalancedError):
    """A BSS run did not close its barrier gap within the round cap."""


class NoGoodExecution(BalancedError):
    """A sampling procedure produced no good execution within the attempt cap."""


class WellBalancedViolation(BalancedError):
    """A completed run broke one of the well-balanced bookkeeping bounds."""


class InvalidK(BalancedError, ValueError):
    """The sparsity k is outside the supported range."""


class NetTooLarge(BalancedError):
    """A frequency net would enumerate more candidate tuples than allowed."""
