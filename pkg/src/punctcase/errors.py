"""Exception types raised across the toolkit."""


class PunctCaseError(ValueError):
    """Base class for all toolkit errors."""


class EmptyInput(PunctCaseError):
    pass


class InsufficientData(PunctCaseError):
    pass


class EmptyCorpus(PunctCaseError):
    pass


class ChunkingRequired(PunctCaseError):
    """Sequence is longer than the encoder accepts; the caller must chunk it."""


class InvalidTruncation(PunctCaseError):
    pass


class NoSupervision(PunctCaseError):
    """A loss was requested over a batch with no supervised positions."""


class IncompatibleCheckpoint(PunctCaseError):
    pass


class EmptyReference(PunctCaseError):
    """WER is undefined for an empty reference."""


class AlignmentRequired(PunctCaseError):
    """Predicted and gold sequences differ in length; align them first."""


class EmptyEvaluation(PunctCaseError):
    pass


class TilingError(PunctCaseError):
    """Chunk cores do not tile the sequence (internal invariant broken)."""


class ConfigError(PunctCaseError):
    pass
