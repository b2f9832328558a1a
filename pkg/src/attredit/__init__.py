"""Attribute-aware garment image editing workbench."""

__version__ = "0.1.0"

from .schema import AttributeGroup, AttributeSchema, AttributeVector, SchemaError
from .networks import NetworkConfig, ParameterStore, init_params
from .trainer import TrainConfig, fit, fit_classifier, train_step

__all__ = [
    "AttributeGroup",
    "AttributeSchema",
    "AttributeVector",
    "SchemaError",
    "NetworkConfig",
    "ParameterStore",
    "init_params",
    "TrainConfig",
    "fit",
    "fit_classifier",
    "train_step",
    "__version__",
]
