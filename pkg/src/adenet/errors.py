"""Exception hierarchy shared by all adenet modules."""


class AdenetError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(AdenetError):
    """Input data violates an operation's preconditions."""


class ConfigurationError(AdenetError):
    """Configuration values are inconsistent or unusable."""


class InvalidStateError(AdenetError):
    """Operation called on an object in the wrong state."""


class NoActiveFramesError(AdenetError):
    """Speaker activity contains no active frame, so no embedding exists."""


class UnsupportedFormatError(AdenetError):
    """File exists but is not in a supported format."""


class NotSupportedError(AdenetError):
    """Requested computation exceeds what this implementation supports."""


class CheckpointError(AdenetError):
    """Checkpoint file is corrupt or inconsistent with the model config."""
