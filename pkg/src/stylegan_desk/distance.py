"""Pairwise image distances used by the path-length metric."""

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import torch
import torch.nn.functional as F

# fixed per-channel constants; data-dependent standardization would break c^2 scaling
PROXY_CHANNEL_MEAN = (0.0, 0.0, 0.0)
PROXY_CHANNEL_STD = (0.5, 0.5, 0.5)
PROXY_SIZE = 16


@dataclass
class DistanceMetric:
    name: str
    description: str
    quadratic: bool
    fn: Callable[[torch.Tensor, torch.Tensor], torch.Tensor]

    def __call__(self, a, b):
        return self.fn(a, b)


def crop_center(image: torch.Tensor, fraction: float) -> torch.Tensor:
    """Keep the central ``fraction x fraction`` window of ``[..., H, W]`` images."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    h, w = image.shape[-2:]
    ch, cw = int(round(h * fraction)), int(round(w * fraction))
    if ch < 1 or cw < 1:
        raise ValueError(f"crop fraction {fraction} leaves an empty image")
    top, left = (h - ch) // 2, (w - cw) // 2
    return image[..., top:top + ch, left:left + cw]


def _proxy_features(img: torch.Tensor) -> torch.Tensor:
    squeeze = img.dim() == 3
    if squeeze:
        img = img[None]
    c = img.shape[1]
    mean = torch.tensor(PROXY_CHANNEL_MEAN[:c], dtype=img.dtype).view(1, c, 1, 1)
    std = torch.tensor(PROXY_CHANNEL_STD[:c], dtype=img.dtype).view(1, c, 1, 1)
    x = (img - mean) / std
    if x.shape[-2:] != (PROXY_SIZE, PROXY_SIZE):
        x = F.interpolate(x, size=(PROXY_SIZE, PROXY_SIZE), mode="bilinear", align_corners=False,
                          antialias=x.shape[-1] > PROXY_SIZE)
    return x[0] if squeeze else x


def proxy_distance(img1: torch.Tensor, img2: torch.Tensor) -> torch.Tensor:
    """Squared L2 between standardized 16x16 bilinear downsamples.

    Both steps are linear, so the distance is a quadratic form in the
    difference. Batched inputs return one value per image.
    """
    if img1.shape != img2.shape:
        raise ValueError(f"shape mismatch {tuple(img1.shape)} vs {tuple(img2.shape)}")
    diff = _proxy_features(img1) - _proxy_features(img2)
    if img1.dim() == 3:
        return diff.pow(2).sum()
    return diff.pow(2).flatten(1).sum(dim=1)


def squared_l2(img1, img2):
    if img1.shape != img2.shape:
        raise ValueError("shape mismatch")
    d = (img1 - img2).pow(2)
    return d.sum() if d.dim() <= 1 else d.flatten(1).sum(dim=1)


class ExternalPerceptualDistance:
    """Weighted feature-space L2 over a user-supplied network.

    The file at ``weights_path`` must be a TorchScript module mapping an image
    batch to a list of feature tensors ``[N, C_k, H_k, W_k]``, with the
    per-channel weights stored as attribute ``lin_weights`` (one ``[C_k]``
    tensor per layer). Features are unit-normalized along channels and the
    weighted squared differences are spatially averaged and summed over
    layers.
    """

    def __init__(self, weights_path):
        path = Path(weights_path)
        if not path.exists():
            raise FileNotFoundError(f"perceptual weights not found: {path}")
        self.net = torch.jit.load(str(path)).eval()
        self.lin_weights = [torch.as_tensor(w) for w in self.net.lin_weights]

    @torch.no_grad()
    def __call__(self, img1, img2):
        total = 0.0
        for f1, f2, w in zip(self.net(img1), self.net(img2), self.lin_weights):
            f1 = f1 / (f1.norm(dim=1, keepdim=True) + 1e-10)
            f2 = f2 / (f2.norm(dim=1, keepdim=True) + 1e-10)
            total = total + ((f1 - f2).pow(2) * w.view(1, -1, 1, 1)).sum(1).mean(dim=(1, 2))
        return total


_REGISTRY = {
    "proxy": DistanceMetric("proxy", "squared L2 of standardized 16x16 bilinear downsample", True,
                            proxy_distance),
    "l2": DistanceMetric("l2", "plain squared L2 over all values", True, squared_l2),
}


def get_distance(name: str) -> DistanceMetric:
    """Resolve ``proxy``, ``l2`` or ``external:<weights-path>``."""
    if name in _REGISTRY:
        return _REGISTRY[name]
    if name.startswith("external:"):
        ext = ExternalPerceptualDistance(name.split(":", 1)[1])
        return DistanceMetric(name, "external weighted feature L2", True, ext)
    raise KeyError(f"unknown distance metric {name!r}")


def registered_metrics():
    return dict(_REGISTRY)
