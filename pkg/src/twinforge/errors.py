"""Exception types raised across twinforge."""


class TwinforgeError(Exception):
    pass


class DomainError(TwinforgeError, ValueError):
    """An input lies outside the validity range of a correlation or formula."""


class SolverError(TwinforgeError, RuntimeError):
    def __init__(self, message, time=None):
        super().__init__(f"{message} (t = {time} s)" if time is not None else message)
        self.time = time


class ModelCorruptError(TwinforgeError, ValueError):
    pass


class RolloutDivergedError(TwinforgeError, RuntimeError):
    def __init__(self, step):
        super().__init__(f"ROM rollout diverged at step {step}")
        self.step = step


class TrainingDivergedError(TwinforgeError, RuntimeError):
    def __init__(self, epoch):
        super().__init__(f"non-finite training loss at epoch {epoch}")
        self.epoch = epoch


class SchemaError(TwinforgeError, ValueError):
    pass


class UnsupportedVersionError(SchemaError):
    pass


class MissingArtifactError(TwinforgeError, FileNotFoundError):
    pass


class ConfigError(TwinforgeError, ValueError):
    pass


class LeakageError(TwinforgeError, ValueError):
    """A held-out test signal was requested for training."""
