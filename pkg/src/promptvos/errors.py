"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor extents do not satisfy an operation's contract."""


class DegenerateMaskError(ValueError):
    """An attention mask row allows no keys at all."""


class DeterminismError(RuntimeError):
    """Two evaluations of a supposedly deterministic function differed."""


class MissingGradientError(RuntimeError):
    """A trainable parameter reached the optimizer without a gradient."""


class ConfigError(ValueError):
    """Invalid or contradictory configuration."""


class GenerationError(RuntimeError):
    """Synthetic scene generation could not satisfy its constraints."""
