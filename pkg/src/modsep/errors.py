"""Exception hierarchy shared by all modsep modules."""


class ModsepError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(ModsepError):
    """Operands have incompatible shapes."""


class DegenerateInputError(ModsepError):
    """Numerically degenerate input, e.g. a zero-norm vector fed to a cosine."""


class ConfigError(ModsepError):
    """Invalid or inconsistent configuration."""


class DataError(ModsepError):
    """Base class for dataset loading/validation failures."""


class MissingFileError(DataError):
    """A file referenced by a manifest does not exist."""


class SizeMismatchError(DataError):
    """A binary blob has the wrong byte length for its declared shape."""


class NonFiniteError(DataError):
    """A feature blob contains NaN or infinite values."""


class LabelRangeError(DataError):
    """A label value falls outside [0, num_classes)."""


class HiddenLabelError(ModsepError):
    """Attempt to read hidden target labels through the trainer-visible API."""


class NumericAbort(ModsepError):
    """Training produced a non-finite loss; carries a diagnostic breakdown."""

    def __init__(self, message: str, *, epoch: int | None = None,
                 batch: int | None = None, breakdown: dict | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.breakdown = breakdown or {}
