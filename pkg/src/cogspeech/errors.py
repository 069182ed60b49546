"""Exception types shared across the pipeline."""


class FormatError(ValueError):
    """Input container (WAV, checkpoint, feature file) is malformed."""


class UnsupportedFormatError(ValueError):
    """Input is well-formed but uses an encoding we refuse to guess at."""


class TooShortError(ValueError):
    """Audio or feature sequence is shorter than the operation requires."""


class InvalidParameterError(ValueError):
    """Augmentation or model parameter outside its documented range."""


class ZeroPowerError(ValueError):
    """Signal power is zero, so a requested SNR is undefined."""


class ShapeError(ValueError):
    """Tensor shapes do not agree."""


class NumericError(ArithmeticError):
    """Non-finite value where a finite one is required; the step is aborted."""


class ConfigError(ValueError):
    """Bad experiment configuration (unknown group name, invalid field)."""


class InvalidTargetError(ValueError):
    """Decoder target sequence is empty or lacks sos/eos framing."""


class CheckpointError(ValueError):
    """Checkpoint is missing required groups or fails validation."""


class DegenerateDataError(ValueError):
    """Training set cannot support the requested fit (single class etc.)."""


class StratificationError(ValueError):
    """A class is too small to stratify into the requested fold count."""


class UndefinedMetricError(ValueError):
    """Metric is undefined for this input (single class, empty reference...)."""


class DependencyError(FileNotFoundError):
    """A required upstream artifact (checkpoint, manifest) is absent."""
