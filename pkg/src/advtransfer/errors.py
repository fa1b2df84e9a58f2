"""Exception hierarchy shared across the package."""


class AdvTransferError(Exception):
    """Base class for all package errors."""


class ShapeError(AdvTransferError, ValueError):
    """Tensor or array shapes do not agree."""


class UpdateError(AdvTransferError, ValueError):
    """An optimizer update received a non-finite gradient."""


class TrainingError(AdvTransferError, RuntimeError):
    """Training diverged (non-finite loss)."""


class CheckpointError(AdvTransferError):
    """Base class for checkpoint and archive load failures."""


class MagicError(CheckpointError):
    """The file does not start with the expected magic bytes."""


class VersionError(CheckpointError):
    """The container format version is not supported."""


class TruncatedError(CheckpointError):
    """The file ended before the declared payload."""


class ShapeTableError(CheckpointError):
    """Declared parameter shapes disagree with the model spec or payload."""


class IngestError(AdvTransferError, ValueError):
    """Input data could not be converted into patches."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class AttackError(AdvTransferError, RuntimeError):
    """An attack could not proceed (non-finite gradient, singular linearization)."""


class ScenarioError(AdvTransferError, ValueError):
    """A transferability case violates its scenario's mismatch pattern."""


class ConfigError(AdvTransferError, ValueError):
    """A run configuration file is invalid."""
