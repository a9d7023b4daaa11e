"""Exception hierarchy shared by the solvers and the command line."""


class FifoTapError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(FifoTapError, ValueError):
    """Malformed network, scenario, or flow state."""

    exit_code = 2


class InfeasibleFlowError(ValidationError):
    pass


class NotAnEquilibriumError(FifoTapError, ValueError):
    exit_code = 2


class NotConvergedError(FifoTapError):
    exit_code = 3


class StepUnderflowError(NotConvergedError):
    """The decision step was halved below its floor without an admissible update."""


class HorizonError(FifoTapError):
    """Simulation horizon too short for every vehicle to finish its trip."""

    exit_code = 3


class ScenarioIOError(FifoTapError, OSError):
    exit_code = 4
