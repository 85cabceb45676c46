"""Exception hierarchy for carbonppi.

Validation problems (bad inputs, malformed configs) and numerical failures
(Riccati blow-up, singular transforms) are kept on separate branches so the
CLI can map them to distinct exit codes.
"""


class CarbonPPIError(Exception):
    """Base class for all carbonppi errors."""


class ValidationError(CarbonPPIError):
    """An input violates a documented invariant."""


class AsymmetricInput(ValidationError):
    """A matrix that must be symmetric is not."""


class NotPositiveDefinite(ValidationError):
    """A matrix that must be positive definite has a pivot below tolerance."""


class WrongShape(ValidationError):
    """An operation was called on inputs of an unsupported shape."""


class DegenerateCase(ValidationError):
    """The requested quantity is undefined for these degenerate inputs."""


class ParseError(ValidationError):
    """A configuration file could not be parsed."""


class NumericalError(CarbonPPIError):
    """A computation failed for numerical reasons."""


class InadmissibleDelta(NumericalError):
    """Risk aversion outside the admissible set; the Riccati solution explodes."""


class RiccatiBlowUp(NumericalError):
    """A Riccati trajectory exceeded the blow-up threshold."""


class NegativeVariance(NumericalError):
    """The filter-variance curve dipped below zero."""


class SingularTransform(NumericalError):
    """The full-to-partial coefficient map hit a vanishing denominator."""


class LambdaZero(NumericalError):
    """Closed forms that divide by the mean-reversion rate were requested at zero."""


class OutOfGrid(ValidationError):
    """A time outside the solved grid was requested."""


class DegenerateMultiplier(ValidationError):
    """Exposures sum to zero, so portfolio weights are undefined."""


class NonFiniteObservation(ValidationError):
    """An observed return is NaN or infinite."""


class NonPositiveCushion(ValidationError):
    """Utility evaluation requires a strictly positive cushion."""


class EmptySample(ValidationError):
    """Summary statistics require at least one observation."""
