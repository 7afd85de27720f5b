"""Feature extractors for the FID proxy."""

import math

import numpy as np
import torch
import torch.nn.functional as F

FEATURE_SEED = 20190101
FEATURE_DIM = 64


class RandomConvFeatures:
    """Two random 3x3 conv layers with pooling, then a random linear projection.

    Weights come from a fixed seed, so features are identical across runs and
    processes. Every image is processed independently of the rest of the batch.
    """

    def __init__(self, dim=FEATURE_DIM, size=16, seed=FEATURE_SEED):
        g = torch.Generator()
        g.manual_seed(seed)
        self.size = size
        self.w1 = torch.randn(32, 3, 3, 3, generator=g, dtype=torch.float64) / math.sqrt(27)
        self.w2 = torch.randn(64, 32, 3, 3, generator=g, dtype=torch.float64) / math.sqrt(288)
        flat = 64 * (size // 4) ** 2
        self.proj = torch.randn(flat, dim, generator=g, dtype=torch.float64) / math.sqrt(flat)
        self.dim = dim

    @torch.no_grad()
    def __call__(self, images):
        x = images.to(torch.float64)
        if x.shape[-1] != self.size:
            x = F.interpolate(x, size=(self.size, self.size), mode="bilinear", align_corners=False,
                              antialias=x.shape[-1] > self.size)
        x = F.avg_pool2d(F.leaky_relu(F.conv2d(x, self.w1, padding=1), 0.2), 2)
        x = F.avg_pool2d(F.leaky_relu(F.conv2d(x, self.w2, padding=1), 0.2), 2)
        return x.flatten(1) @ self.proj


_EXTRACTORS = {"random_conv": RandomConvFeatures}
_CACHE = {}


def extract_features(images, extractor_name="random_conv", batch_size=256):
    """Embed an image batch ``[N, 3, H, W]`` into feature vectors ``[N, dim]``."""
    if extractor_name not in _EXTRACTORS:
        raise KeyError(f"unknown feature extractor {extractor_name!r}")
    if len(images) == 0:
        raise ValueError("empty image batch")
    if extractor_name not in _CACHE:
        _CACHE[extractor_name] = _EXTRACTORS[extractor_name]()
    ext = _CACHE[extractor_name]
    chunks = [ext(images[i:i + batch_size]) for i in range(0, len(images), batch_size)]
    return torch.cat(chunks).numpy().astype(np.float64)
