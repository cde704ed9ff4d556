"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array lengths or shapes do not match the surface/grid they refer to."""


class ConfigurationError(ValueError):
    """A configuration value is out of its allowed range or inconsistent."""


class DatasetFormatError(ValueError):
    """A persisted dataset/codebook file failed parsing or validation."""


class SearchSpaceError(ValueError):
    """An enumeration was refused because it exceeds the safety guard."""


class TrainingError(RuntimeError):
    """A learning update produced a non-finite quantity."""


class PipelineError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""
