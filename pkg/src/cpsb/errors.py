"""Exception hierarchy shared by every stage of the toolkit."""


class CPSBError(Exception):
    """Base class; ``stage`` names the pipeline stage that raised."""

    stage = "core"


class InvalidConfig(CPSBError):
    stage = "config"


# -- tasks / timing -----------------------------------------------------------

class InvalidTask(CPSBError, ValueError):
    stage = "tasks"


class QueryBeforeFirstArrival(CPSBError, ValueError):
    stage = "tasks"


class EmptyWindow(CPSBError, ValueError):
    stage = "timing"


class OutOfWindow(CPSBError, ValueError):
    stage = "timing"


class InconsistentState(CPSBError, ValueError):
    """Arrival reset fired at an instant where no trace instance arrives."""

    stage = "timing"


class OutOfDomain(CPSBError, ValueError):
    stage = "timing"


# -- robustness ----------------------------------------------------------------

class NegativeComputingTime(CPSBError, ValueError):
    stage = "robustness"


class DeadlineExceeded(CPSBError, ValueError):
    stage = "robustness"


class NoExpiryInRange(CPSBError, ValueError):
    stage = "robustness"


# -- battery -------------------------------------------------------------------

class InvalidParams(CPSBError, ValueError):
    stage = "battery"


class NumericalError(CPSBError, ArithmeticError):
    stage = "battery"


class SingularCapacitance(NumericalError):
    """A circuit capacitance reached (or crossed) zero.

    ``t`` is the time of the offending step when raised by the integrator and
    ``partial`` carries the trajectory computed up to that step.
    """

    def __init__(self, message, t=None, partial=None):
        super().__init__(message)
        self.t = t
        self.partial = partial


class StepTooLarge(NumericalError):
    pass


class InvalidRegime(CPSBError, ValueError):
    stage = "stability"


class NonpositiveCurrent(CPSBError, ValueError):
    stage = "stability"


class WeightCollapse(NumericalError):
    stage = "estimator"


# -- switching -----------------------------------------------------------------

class EmptyRuns(CPSBError, ValueError):
    stage = "switching"


class NoDecisionInRun(CPSBError):
    stage = "switching"
