"""Weakly supervised speech denoiser.

A complex-mask spectral denoiser trained jointly from synthetic pairs and
reference-free noisy recordings, guided by a learned non-intrusive quality
estimator that is kept up to date through an alternating training protocol.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, DomainError, SequencingError

__all__ = [
    "ConfigError",
    "DataError",
    "DomainError",
    "SequencingError",
    "__version__",
]
