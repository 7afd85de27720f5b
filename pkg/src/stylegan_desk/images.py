"""PNG export of image tensors."""

from pathlib import Path

import numpy as np
import torch
from PIL import Image


def to_uint8(images: torch.Tensor) -> np.ndarray:
    """[-1, 1] floats -> uint8 via round((v + 1) * 127.5), clamped; NCHW -> NHWC."""
    x = images.detach().to(torch.float64).cpu().numpy()
    x = np.clip(np.round((x + 1.0) * 127.5), 0, 255).astype(np.uint8)
    return np.moveaxis(x, -3, -1)


def save_image(image: torch.Tensor, path) -> None:
    Image.fromarray(to_uint8(image)).save(Path(path))


def image_grid(images: torch.Tensor, rows: int, cols: int, pad: int = 1) -> torch.Tensor:
    """Tile ``rows * cols`` images ``[N, C, H, W]`` into one ``[C, H', W']`` image."""
    n, c, h, w = images.shape
    if n > rows * cols:
        raise ValueError("more images than grid cells")
    grid = images.new_full((c, rows * (h + pad) + pad, cols * (w + pad) + pad), -1.0)
    for i in range(n):
        r, k = divmod(i, cols)
        top, left = pad + r * (h + pad), pad + k * (w + pad)
        grid[:, top:top + h, left:left + w] = images[i]
    return grid


def save_grid(images: torch.Tensor, path, rows: int, cols: int) -> None:
    save_image(image_grid(images, rows, cols), path)
