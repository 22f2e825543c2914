"""Layers, parameters, dropout masks, optimizers and checkpoints."""

from .checkpoint import Checkpoint, load_checkpoint, read_checkpoint, save_checkpoint
from .forward import DropoutMaskSet, forward, sample_masks, stack_mask_sets
from .optim import SGD, Adam, adam_step, sgd_step
from .params import Parameter, ParameterStore, init_params
from .spec import (
    Conv,
    ConvTranspose,
    Dense,
    Dropout,
    Flatten,
    NetworkSpec,
    ReLU,
    Reshape,
    Sigmoid,
    layer_from_dict,
    sequential,
)

__all__ = [
    "Adam",
    "Checkpoint",
    "Conv",
    "ConvTranspose",
    "Dense",
    "Dropout",
    "DropoutMaskSet",
    "Flatten",
    "NetworkSpec",
    "Parameter",
    "ParameterStore",
    "ReLU",
    "Reshape",
    "SGD",
    "Sigmoid",
    "adam_step",
    "forward",
    "init_params",
    "layer_from_dict",
    "load_checkpoint",
    "read_checkpoint",
    "save_checkpoint",
    "sequential",
    "sgd_step",
    "stack_mask_sets",
]
