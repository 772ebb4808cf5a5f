"""Exception hierarchy shared by all modules."""


class QArrivalError(Exception):
    """Base class for every error raised by this package."""


class ZeroNormError(QArrivalError):
    """A state with vanishing norm cannot be normalized."""


class NearNodeError(QArrivalError):
    """The density at the requested point is below the node floor."""


class QuadratureError(QArrivalError):
    """An adaptive quadrature hit its subdivision cap or failed to converge."""


class SupportError(QArrivalError):
    """A finite window or grid does not carry enough of the state's mass."""


class StepLimitError(QArrivalError):
    """The trajectory integrator exceeded its step budget."""


class EnsembleAbortError(QArrivalError):
    """Too many trajectories of an ensemble aborted."""


class SamplingError(QArrivalError):
    """Rejection sampling efficiency fell below the allowed floor."""


class InvalidModelError(QArrivalError):
    """A measurement model violates its invariants."""


class ScenarioError(QArrivalError):
    """A scenario file is malformed or violates the schema."""
