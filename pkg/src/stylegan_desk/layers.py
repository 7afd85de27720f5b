"""Shared building blocks: equalized-lr layers, binomial resampling, misc norms."""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

SQRT2 = math.sqrt(2.0)
LRELU_SLOPE = 0.2


class EqualizedLinear(nn.Module):
    """Fully-connected layer with runtime He scaling.

    Stored weights are drawn N(0, 1) and divided by ``lr_mul``; the forward
    pass multiplies by ``gain / sqrt(fan_in) * lr_mul``. The effective weight
    therefore starts at He scale while optimizer steps on the stored value move
    it ``lr_mul`` times as far as an ``lr_mul=1`` layer of the same fan-in.
    """

    def __init__(self, in_features, out_features, bias=True, bias_init=0.0, gain=SQRT2,
                 lr_mul=1.0, generator=None):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.lr_mul = lr_mul
        self.weight = nn.Parameter(torch.randn(out_features, in_features, generator=generator) / lr_mul)
        self.weight_gain = gain / math.sqrt(in_features) * lr_mul
        if bias:
            init = torch.full((out_features,), 1.0) * torch.as_tensor(bias_init, dtype=torch.float32)
            self.bias = nn.Parameter(init / lr_mul)
        else:
            self.register_parameter("bias", None)

    def effective_weight(self):
        return self.weight * self.weight_gain

    def effective_bias(self):
        return None if self.bias is None else self.bias * self.lr_mul

    def forward(self, x):
        return F.linear(x, self.effective_weight(), self.effective_bias())

    def extra_repr(self):
        return f"{self.in_features}, {self.out_features}, lr_mul={self.lr_mul}"


class EqualizedConv2d(nn.Module):
    def __init__(self, in_channels, out_channels, kernel_size, bias=True, gain=SQRT2,
                 lr_mul=1.0, generator=None):
        super().__init__()
        self.lr_mul = lr_mul
        self.padding = kernel_size // 2
        self.weight = nn.Parameter(
            torch.randn(out_channels, in_channels, kernel_size, kernel_size, generator=generator) / lr_mul)
        self.weight_gain = gain / math.sqrt(in_channels * kernel_size * kernel_size) * lr_mul
        self.bias = nn.Parameter(torch.zeros(out_channels)) if bias else None

    def forward(self, x):
        b = None if self.bias is None else self.bias * self.lr_mul
        return F.conv2d(x, self.weight * self.weight_gain, b, padding=self.padding)


def _binomial_kernel(x: torch.Tensor, gain: float) -> torch.Tensor:
    k = torch.tensor([1.0, 2.0, 1.0], dtype=x.dtype, device=x.device)
    k = torch.outer(k, k) / 16.0 * gain
    c = x.shape[1]
    return k.expand(c, 1, 3, 3).contiguous()


def resample_binomial(x: torch.Tensor, direction: str) -> torch.Tensor:
    """2x resampling with a separable [1, 2, 1] low-pass filter.

    ``up`` zero-inserts and filters with gain 4; ``down`` filters and then
    keeps every second sample. Borders use replicate padding so constant
    images stay constant.
    """
    n, c, h, w = x.shape
    if direction == "up":
        xp = F.pad(x, (0, 1, 0, 1), mode="replicate")
        y = x.new_zeros(n, c, 2 * (h + 1), 2 * (w + 1))
        y[:, :, ::2, ::2] = xp
        y = y[:, :, : 2 * h + 1, : 2 * w + 1]
        y = F.pad(y, (1, 0, 1, 0))
        return F.conv2d(y, _binomial_kernel(x, 4.0), groups=c)
    if direction == "down":
        if h % 2 or w % 2:
            raise ValueError(f"cannot downsample odd size {h}x{w}")
        xp = F.pad(x, (1, 1, 1, 1), mode="replicate")
        return F.conv2d(xp, _binomial_kernel(x, 1.0), groups=c)[:, :, ::2, ::2]
    raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")


def resample(x: torch.Tensor, direction: str, mode: str = "binomial") -> torch.Tensor:
    if mode == "binomial":
        return resample_binomial(x, direction)
    if mode == "nearest":
        if direction == "up":
            return F.interpolate(x, scale_factor=2, mode="nearest")
        if x.shape[-1] % 2 or x.shape[-2] % 2:
            raise ValueError("cannot downsample odd size")
        return F.avg_pool2d(x, 2)
    raise ValueError(f"unknown resample mode {mode!r}")


def pixel_norm(x: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    return x * torch.rsqrt(x.pow(2).mean(dim=1, keepdim=True) + eps)


def minibatch_stddev(x: torch.Tensor, group_size: int = 4) -> torch.Tensor:
    """Append one feature map holding the average per-group stddev."""
    n, c, h, w = x.shape
    g = min(group_size, n)
    while n % g:
        g -= 1
    y = x.reshape(g, -1, c, h, w)
    y = y - y.mean(dim=0)
    y = (y.pow(2).mean(dim=0) + 1e-8).sqrt()
    y = y.mean(dim=(1, 2, 3))
    y = y.reshape(-1, 1, 1, 1).repeat(g, 1, h, w)
    return torch.cat([x, y], dim=1)
