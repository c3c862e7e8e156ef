"""Exception types raised across the simulator."""


class SimulatorError(Exception):
    """Base class for every error the simulator raises on purpose."""


# --- task-set construction ---

class EmptyTaskSet(SimulatorError):
    pass


class DuplicateId(SimulatorError):
    pass


class InvalidTaskIds(SimulatorError):
    """Task ids must be dense, 1..N."""


class InvalidStage(SimulatorError):
    pass


# --- execution-time tracking ---

class NonpositiveSample(SimulatorError):
    pass


class ZeroTotalEstimate(SimulatorError):
    """Per-stage deadline shares need a positive execution-time estimate."""


# --- GPU model ---

class InvalidOversubscription(SimulatorError):
    pass


class NoActiveStages(SimulatorError):
    pass


class OvershootBeyondCompletion(SimulatorError):
    pass


class InvalidBatch(SimulatorError):
    pass


# --- scenarios, sweeps, reports ---

class UnknownPreset(SimulatorError):
    pass


class ParseError(SimulatorError):
    pass


class SchemaError(SimulatorError):
    pass


class InvalidScenario(SimulatorError):
    pass


class ReportIoError(SimulatorError):
    pass
