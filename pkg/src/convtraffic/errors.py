"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor or spec dimensions do not line up."""


class ConfigError(ValueError):
    """Configuration outside what the modeled hardware or model supports."""


class GradcheckError(RuntimeError):
    """The finite-difference oracle could not produce a usable gradient."""
