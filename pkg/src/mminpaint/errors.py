"""Exception hierarchy shared across the package."""


class InpaintError(Exception):
    """Base class for all package errors."""


class DomainError(InpaintError, ValueError):
    pass


class ShapeError(InpaintError, ValueError):
    pass


class ConfigError(InpaintError, ValueError):
    def __init__(self, message, pointer=""):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}" if pointer else message)


class PairingError(InpaintError, ValueError):
    pass


class SceneNotFoundError(InpaintError, FileNotFoundError):
    pass


class FormatError(InpaintError, ValueError):
    pass


class ValidationError(InpaintError, ValueError):
    pass


class SceneIOError(InpaintError, OSError):
    pass


class BehindCameraError(InpaintError, ValueError):
    pass


class OutOfRangeError(InpaintError, ValueError):
    pass


class CoverageError(InpaintError, ValueError):
    pass


class NoReferenceError(InpaintError, LookupError):
    pass


class InsufficientData(InpaintError, ValueError):
    pass
