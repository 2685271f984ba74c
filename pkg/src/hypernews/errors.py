"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violates a documented precondition or invariant."""


class DataFormatError(ValidationError):
    """A file does not conform to its on-disk format."""


class IntegrityError(ValidationError):
    """Cross-references between dataset files are inconsistent."""


class StratificationError(ValidationError):
    """A split or downsample would leave a label class empty."""


class CheckpointError(ValidationError):
    """A checkpoint file is unreadable or shape-incompatible."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""
