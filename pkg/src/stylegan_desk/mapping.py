"""Mapping network f: Z -> W."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import LRELU_SLOPE, EqualizedLinear


class MappingNetwork(nn.Module):
    """MLP of ``depth`` equalized fully-connected layers with leaky ReLU.

    ``depth=0`` is the identity and stands in for generators without a mapping
    network. ``final_activation=False`` drops the activation after the last
    layer.
    """

    def __init__(self, z_dim=64, w_dim=64, depth=8, lr_mul=0.01, final_activation=True,
                 generator=None):
        super().__init__()
        if depth < 0:
            raise ValueError("depth must be >= 0")
        if depth == 0 and z_dim != w_dim:
            raise ValueError("identity mapping needs z_dim == w_dim")
        self.z_dim = z_dim
        self.w_dim = w_dim
        self.depth = depth
        self.final_activation = final_activation
        self.layers = nn.ModuleList(
            EqualizedLinear(z_dim if i == 0 else w_dim, w_dim, lr_mul=lr_mul, generator=generator)
            for i in range(depth)
        )

    def forward(self, z):
        if z.shape[-1] != self.z_dim:
            raise ValueError(f"expected latent of size {self.z_dim}, got {z.shape[-1]}")
        x = z
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if self.final_activation or i < self.depth - 1:
                x = F.leaky_relu(x, LRELU_SLOPE)
        return x


def init_mapper(rng_seed: int, depth: int = 8, width: int = 64, lr_mul: float = 0.01,
                final_activation: bool = True) -> MappingNetwork:
    g = torch.Generator()
    g.manual_seed(int(rng_seed))
    return MappingNetwork(width, width, depth, lr_mul, final_activation, generator=g)


def map_latent(params: MappingNetwork, z: torch.Tensor) -> torch.Tensor:
    return params(z)
