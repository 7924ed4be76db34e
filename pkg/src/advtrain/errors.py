class AdvTrainError(Exception):
    """Base class for all package errors."""


class ConfigError(AdvTrainError):
    """Invalid configuration, scenario or method selection."""


class UsageError(AdvTrainError):
    """An API was called in a state that violates its precondition."""


class NumericError(AdvTrainError):
    """A non-finite value appeared; the offending update was not applied."""


class FormatError(AdvTrainError):
    """A checkpoint or data file is malformed or incompatible."""


class PretrainingError(AdvTrainError):
    """Victim pretraining ended below the minimum acceptable goal rate."""


class PreconditionError(AdvTrainError):
    """A pipeline stage is missing an input produced by an earlier stage."""


class StageError(AdvTrainError):
    """A pipeline stage failed; carries the stage name and config hash."""

    def __init__(self, stage, config_hash, cause):
        self.stage = stage
        self.config_hash = config_hash
        self.cause = cause
        super().__init__(f"stage {stage!r} failed (config {config_hash}): {cause}")
