"""Exception hierarchy shared across the package."""


class PierError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(PierError, ValueError):
    pass


class DegenerateVectorError(InvalidInputError):
    """A vector norm fell below the cosine epsilon."""


class EmptyLossError(InvalidInputError):
    pass


class TruncationError(InvalidInputError):
    """Input sequence longer than the model's max_seq_len."""


class InvalidConfigError(PierError, ValueError):
    pass


class GenerationError(PierError):
    """Corpus generation could not satisfy a constraint."""


class ParseError(PierError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class VersionError(PierError, ValueError):
    pass


class CheckpointError(PierError, ValueError):
    pass


class DependencyError(PierError):
    """A prerequisite artifact (corpus, prior-stage checkpoint) is missing."""


class DivergenceError(PierError, FloatingPointError):
    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class CompatibilityError(PierError, ValueError):
    pass


class DegenerateProbeError(PierError, ValueError):
    """Probe training data has a single class."""


class DegenerateInputError(InvalidInputError):
    pass


class IntegrityError(PierError):
    """Parameters that should have stayed frozen changed during training."""
