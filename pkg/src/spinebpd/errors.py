"""Exception types shared across the package."""


class ContractError(ValueError):
    """An argument violates an operation's documented preconditions."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""


class GenerationError(RuntimeError):
    """A sampled spine geometry could not be rendered; the caller should resample."""


class ExtractionError(RuntimeError):
    """Corner extraction could not produce four corners for a vertebra label."""


class CheckpointError(ValueError):
    """A checkpoint file is corrupt or has an unsupported format version."""


class DataFormatError(ValueError):
    """A dataset file (PGM, JSON, manifest) is malformed."""
