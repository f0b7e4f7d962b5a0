"""Vertical federated learning with multiple data owners and label owners.

Data owners hold horizontal strips of each image and a small bottom network;
label owners hold labels and the top network. Label-owner models are merged
every round by a server optimizer (FedAvg, FedAdam, FedYogi, FedDemonAdam),
and each data owner averages the model copies it trained with every label
owner.
"""

from .errors import (ConfigurationError, FormatError, InputError, InternalError, MultiVFLError, NumericError,
                     ProtocolError)
from .nn import LayerSpec, Net, ParamSet

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "FormatError", "InputError", "InternalError", "MultiVFLError", "NumericError",
    "ProtocolError", "LayerSpec", "Net", "ParamSet",
]
