"""Shared exception types."""


class CorpusError(ValueError):
    """Raised for malformed or inconsistent corpus files."""


class ConfigError(ValueError):
    """Raised for invalid configuration values."""


class CheckpointError(RuntimeError):
    """Raised when a checkpoint or embedding store cannot be read."""


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, message, batch_pairs=None):
        super().__init__(message)
        self.batch_pairs = batch_pairs or []
