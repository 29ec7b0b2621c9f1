"""Exception and warning types for the siglog pipeline."""


class PipelineError(Exception):
    """Exception raised for data or processing failures in any pipeline stage."""
    pass


class InkFormatError(PipelineError):
    """A line of an ink file could not be decoded into a record."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class InvariantError(PipelineError):
    """A value violates an invariant of the handwriting data model."""
    pass


class FitError(PipelineError):
    """Sigma-lognormal extraction could not produce a result."""
    pass


class FeatureError(PipelineError):
    """Feature computation failed for a drill or student."""
    pass


class ModelError(PipelineError):
    """Model fitting, selection or evaluation failed."""
    pass


class ConfigError(Exception):
    """Invalid configuration or command-line usage."""
    pass


class PipelineWarning(UserWarning):
    """Recoverable numerical condition (undefined metric, sparse class, ...)."""
    pass
