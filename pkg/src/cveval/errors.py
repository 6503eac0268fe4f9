"""Exception types shared across the package."""

__all__ = ["DecompositionError", "NumericalError", "LoadError", "ConfigError"]


class DecompositionError(ValueError):
    """A matrix factorization failed (e.g. a non-SPD Cholesky pivot)."""

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


class NumericalError(RuntimeError):
    """Divergent or non-finite numerical state (NaN log-density, etc.)."""


class LoadError(ValueError):
    """A dataset file failed validation."""


class ConfigError(ValueError):
    """An invalid run or model configuration."""
