"""Exceptions shared across pipeline stages."""


class ConfigurationError(ValueError):
    """A run configuration is inconsistent or unsatisfiable."""


class PipelineError(RuntimeError):
    """A pipeline stage failed badly enough that its output is unusable."""
