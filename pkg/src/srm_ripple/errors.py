"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid configuration value; the message names the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class SimulationError(RuntimeError):
    """The closed-loop integration produced a non-finite state."""

    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message)


class DegeneratePartitionError(ValueError):
    pass


class RankDeficiencyError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


class InsufficientDataError(ValueError):
    pass


class SteadyStateError(ValueError):
    """Speed drifted too much across an analysis window."""


class TrainingAborted(RuntimeError):
    """Training stopped by the instability guard; carries the partial report."""

    def __init__(self, message, report=None, compensator=None):
        self.report = report
        self.compensator = compensator
        super().__init__(message)


class CompensatorFileError(ValueError):
    pass
