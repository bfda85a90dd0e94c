"""MVNet: hybrid state-space / attention backbone for hyperspectral
classification, on a small self-verifying autodiff core."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    FormatError,
    MvnetError,
    NumericError,
    UsageError,
)
from .rng import Rng
from .tensor import Tensor, grad_check, precision, set_default_dtype

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "FormatError",
    "MvnetError",
    "NumericError",
    "Rng",
    "Tensor",
    "UsageError",
    "__version__",
    "grad_check",
    "precision",
    "set_default_dtype",
]
