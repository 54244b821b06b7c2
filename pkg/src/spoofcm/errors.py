"""Exception types shared across the package."""


class SpoofCmError(Exception):
    """Base class for all package errors."""


class ManifestError(SpoofCmError):
    """Malformed or inconsistent manifest / protocol content."""


class AudioError(SpoofCmError):
    """Invalid waveform input or audio file problem."""


class ConfigError(SpoofCmError):
    """Invalid configuration value or combination."""


class MetricError(SpoofCmError):
    """Score set cannot support the requested metric."""


class CheckpointError(SpoofCmError):
    """Checkpoint file malformed or incompatible with the model."""


class TrainingError(SpoofCmError):
    """Training run cannot proceed (bad data, diverged loss, ...)."""
