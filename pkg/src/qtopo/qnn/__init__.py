"""Small numpy deep-learning engine for quaternion and plain CNN classifiers."""

from .layers import LayerSpec, make_layer
from .model import (
    CLASS_VALUES, N_CLASSES, NetConfig, Network, build, class_index, cross_entropy,
    default_config, encode_channels, encode_pure, layer_specs, load_checkpoint,
    save_checkpoint, softmax,
)

__all__ = [
    "CLASS_VALUES", "N_CLASSES", "LayerSpec", "NetConfig", "Network", "build",
    "class_index", "cross_entropy", "default_config", "encode_channels", "encode_pure",
    "layer_specs", "load_checkpoint", "make_layer", "save_checkpoint", "softmax",
]
