"""Exception and warning taxonomy.

The CLI maps exception groups to exit codes: configuration errors exit 2,
hypothesis failures exit 3, numerical failures exit 4, statistical gate
failures exit 5.
"""


class BetaTransportError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BetaTransportError):
    """Invalid or inconsistent user input (exit code 2)."""


class UnsupportedOrderError(ConfigurationError):
    """Derivative order outside the supported range."""


class InvalidSupportError(ConfigurationError):
    """Degenerate or malformed support interval."""


class InvalidInputError(ConfigurationError):
    """Arguments violate a documented precondition."""


class HypothesisFailureError(BetaTransportError):
    """Model fails the one-cut / non-criticality hypotheses (exit code 3)."""


class NoOneCutSolutionError(HypothesisFailureError):
    """The one-cut ansatz is inconsistent for this potential."""


class CriticalityError(HypothesisFailureError):
    """Density factor S drops below the non-criticality floor."""


class NumericalFailureError(BetaTransportError):
    """A solver or integrator failed to meet its tolerance (exit code 4)."""


class NonConvergenceError(NumericalFailureError):
    """Fixed-point iteration failed to contract."""


class InversionFailureError(NumericalFailureError):
    """Master-operator inversion produced inconsistent endpoint values."""


class StiffFlowError(NumericalFailureError):
    """ODE integrator step size underflowed."""


class DegenerateConfigurationError(NumericalFailureError):
    """Eigenvalue configuration with (near-)coincident points."""


class DomainError(NumericalFailureError, ValueError):
    """Evaluation requested at a point outside the function's domain."""


class StatisticalFailureError(BetaTransportError):
    """A calibrated statistical gate failed (exit code 5)."""


class TuningWarning(UserWarning):
    """Sampler auto-tuning ended outside the target acceptance window."""


class ExtrapolationWarning(UserWarning):
    """Field evaluated far outside its tabulated window."""


class ClampWarning(UserWarning):
    """Value clamped to its analytic limit near a support endpoint."""
