"""Exception types shared across the package."""


class GlossNMTError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(GlossNMTError, ValueError):
    """Operand shapes do not conform for a primitive."""

    def __init__(self, primitive, message, shapes=()):
        self.primitive = primitive
        self.shapes = tuple(shapes)
        detail = f"{primitive}: {message}"
        if shapes:
            detail += " (shapes: " + ", ".join(str(tuple(s)) for s in shapes) + ")"
        super().__init__(detail)


class ContractError(GlossNMTError, ValueError):
    """A precondition of an operation was violated."""


class NonFiniteGradientError(GlossNMTError, FloatingPointError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"non-finite gradient in parameter {name!r}")


class WeightFormatError(GlossNMTError):
    """Malformed weight container."""


class VersionError(WeightFormatError):
    pass


class TruncatedFileError(WeightFormatError):
    pass


class DuplicateNameError(WeightFormatError):
    pass


class CorpusError(GlossNMTError, ValueError):
    """Parallel corpus files are malformed."""


class TrainingDivergedError(GlossNMTError, FloatingPointError):
    def __init__(self, epoch, batch, alphas, loss):
        self.epoch = epoch
        self.batch = batch
        self.alphas = dict(alphas)
        self.loss = loss
        super().__init__(
            f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}, alphas {self.alphas}"
        )


class ConfigError(GlossNMTError, ValueError):
    """Invalid or unknown configuration key."""
