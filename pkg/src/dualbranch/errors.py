"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(RuntimeError):
    """A precondition of an operation was violated by the caller."""


class ConfigError(ValueError):
    """Invalid configuration value; the message names the offending field."""


class IngestionError(IOError):
    """A corpus file or manifest could not be read."""


class CheckpointError(IOError):
    """Checkpoint file is malformed or does not match the model architecture."""


class TrainingError(RuntimeError):
    """Training aborted, e.g. because a loss component became non-finite."""
