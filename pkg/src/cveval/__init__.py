"""Leave-one-out cross-validatory evaluation of Bayesian latent-variable
models: exact refitting plus fast integrated importance-sampling and WAIC
approximations computed from a single full-data MCMC run.
"""

from .rng import RngStream
from .errors import ConfigError, DecompositionError, LoadError, NumericalError

__version__ = "0.1.0"

__all__ = [
    "RngStream",
    "ConfigError",
    "DecompositionError",
    "LoadError",
    "NumericalError",
    "__version__",
]
