"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    """An argument violates an operation's preconditions."""


class FormatError(ValueError):
    """A file does not follow its documented binary or image layout."""


class LengthError(FormatError):
    """A payload or channel is shorter than its header promises."""


class UnsupportedVersion(FormatError):
    """The file version is not understood by this reader."""


class ConfigError(ValueError):
    """A run configuration is malformed or references unusable inputs."""


class DivergenceError(RuntimeError):
    """Optimization produced a non-finite loss."""

    def __init__(self, iteration, value):
        self.iteration = iteration
        self.value = value
        super().__init__(f"loss became non-finite ({value!r}) at iteration {iteration}")
