"""Exception hierarchy shared by all modules."""


class DiracThermoError(Exception):
    """Base class for library errors."""


class DimensionError(DiracThermoError, ValueError):
    """Operands have incompatible dimensions."""


class NotDiracError(DiracThermoError, ValueError):
    """A descriptor failed Dirac certification where one was required."""


class ModelDomainError(DiracThermoError):
    """A model was evaluated outside its admissible domain (e.g. T below the floor)."""


class ConstraintRankError(DiracThermoError):
    """Constraint one-forms are rank deficient at the queried configuration."""


class LegendreInversionError(DiracThermoError):
    """The fiber derivative could not be inverted."""


class KKTSingularError(DiracThermoError):
    """The saddle-point matrix is singular or too ill-conditioned."""


class NewtonConvergenceError(DiracThermoError):
    """An implicit solve did not converge."""


class DerivativeMismatchError(DiracThermoError):
    """User-supplied analytic derivatives disagree with finite differences."""
