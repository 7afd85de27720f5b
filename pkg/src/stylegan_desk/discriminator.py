"""Discriminator mirroring the generator's resolution schedule.

Also used, without the minibatch-stddev feature, as the attribute classifier
for the separability metric.
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import LRELU_SLOPE, EqualizedConv2d, EqualizedLinear, minibatch_stddev, resample


class Discriminator(nn.Module):
    def __init__(self, resolution=32, channel_base=64, channel_min=8, mbstd_group=4,
                 num_outputs=1, resample_mode="binomial", seed=0):
        super().__init__()
        self.resolution = resolution
        self.mbstd_group = mbstd_group
        self.resample_mode = resample_mode
        levels = int(math.log2(resolution)) - 1

        def ch(level):
            return max(channel_base // (2 ** level), channel_min)

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            top = ch(levels - 1)
            self.from_rgb = EqualizedConv2d(3, top, 1)
            blocks = []
            for level in range(levels - 1, 0, -1):
                blocks.append(nn.ModuleList([
                    EqualizedConv2d(ch(level), ch(level), 3),
                    EqualizedConv2d(ch(level), ch(level - 1), 3),
                ]))
            self.blocks = nn.ModuleList(blocks)
            c0 = ch(0)
            extra = 1 if mbstd_group > 0 else 0
            self.final_conv = EqualizedConv2d(c0 + extra, c0, 3)
            self.final_dense = EqualizedLinear(c0 * 16, c0)
            self.out = EqualizedLinear(c0, num_outputs, gain=1.0)

    def forward(self, img):
        if img.shape[-1] != self.resolution or img.shape[-2] != self.resolution:
            raise ValueError(f"expected {self.resolution}x{self.resolution} images, got {tuple(img.shape[-2:])}")
        x = F.leaky_relu(self.from_rgb(img), LRELU_SLOPE)
        for conv0, conv1 in self.blocks:
            x = F.leaky_relu(conv0(x), LRELU_SLOPE)
            x = F.leaky_relu(conv1(x), LRELU_SLOPE)
            x = resample(x, "down", self.resample_mode)
        if self.mbstd_group > 0:
            x = minibatch_stddev(x, self.mbstd_group)
        x = F.leaky_relu(self.final_conv(x), LRELU_SLOPE)
        x = F.leaky_relu(self.final_dense(x.flatten(1)), LRELU_SLOPE)
        out = self.out(x)
        return out.squeeze(-1) if out.shape[-1] == 1 else out
