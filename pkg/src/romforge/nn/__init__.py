"""Reverse-mode autodiff, layers and the ADAM optimiser."""
from romforge.nn.layers import (
    Activation,
    BatchNorm,
    Conv2d,
    Dense,
    FlattenNodes,
    FromImage,
    Gcn2,
    Gcn2Stack,
    Module,
    Reshape,
    Sequential,
    ToImage,
    UnflattenNodes,
    gcn1,
    gcn2,
    gcn2_beta,
)
from romforge.nn.optim import Adam
from romforge.nn.tensor import Tensor, backward

__all__ = [
    "Activation", "Adam", "BatchNorm", "Conv2d", "Dense", "FlattenNodes", "FromImage",
    "Gcn2", "Gcn2Stack", "Module", "Reshape", "Sequential", "Tensor", "ToImage",
    "UnflattenNodes", "backward", "gcn1", "gcn2", "gcn2_beta",
]
