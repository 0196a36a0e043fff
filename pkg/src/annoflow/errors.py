"""Exception types shared across the package."""


class AnnoflowError(Exception):
    """Base class for all package-specific errors."""


class EmptyMaskError(AnnoflowError, ValueError):
    """Raised when an operation requires a mask with at least one set pixel."""


class MaskShapeError(AnnoflowError, ValueError):
    """Raised when two masks that must share dimensions do not."""


class RleError(AnnoflowError, ValueError):
    """Raised when a run-length sequence is inconsistent with its dimensions."""


class BackendError(AnnoflowError):
    """A segmentation backend failed; carries a protocol error code."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message


class ProtocolError(AnnoflowError, ValueError):
    """Malformed wire-protocol message."""


class EngineStateError(AnnoflowError, RuntimeError):
    """A session operation was called in a state that does not permit it."""


class JournalError(AnnoflowError, ValueError):
    """A session journal could not be parsed or replayed."""


class ManifestError(AnnoflowError, ValueError):
    """A frame manifest is missing or malformed."""
