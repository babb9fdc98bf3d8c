"""Patch transformer with shared temporal/channel attention for multichannel sensor windows.

Pretrained by masked patch reconstruction, fine-tuned for degradation-level
classification and evaluated on a held-out mission profile.
"""

from .errors import ConfigError, DataError, DimensionError, GraphError, NumericError, PetsfmError
from .model import Model, ModelConfig, count_params, preset
from .tensor import Tensor, no_grad, precision

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "GraphError",
    "Model",
    "ModelConfig",
    "NumericError",
    "PetsfmError",
    "Tensor",
    "count_params",
    "no_grad",
    "precision",
    "preset",
]
__version__ = "0.1.0"
