"""Exception hierarchy shared by every stage of the pipeline."""


class IbisError(Exception):
    pass


class DimensionError(IbisError, ValueError):
    pass


class ConfigurationError(IbisError, ValueError):
    pass


class InputError(IbisError, ValueError):
    pass


class UsageError(IbisError, RuntimeError):
    pass


class DegenerateProblemError(IbisError, ValueError):
    pass


class FormatError(IbisError, ValueError):
    """Raised when a binary container is malformed; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class MissingArtifactError(IbisError, FileNotFoundError):
    """An upstream artifact (checkpoint, SVM file) a command depends on is absent."""
