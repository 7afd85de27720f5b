"""Datasets: image directories and procedurally generated attribute datasets."""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

SYNTH_ATTRIBUTES = ["bright", "disk", "vertical_stripes", "right_half"]
FLIP_SENSITIVE = {"right_half"}
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}

BG_LEVEL = -0.8
BLUE_LEVEL = -0.5
STRIPE_AMP = 0.3


@dataclass
class DatasetSpec:
    source: str  # image directory, or "synthetic:<factors>"
    resolution: int = 32
    mirror_augment: bool = False
    count: int = 10_000  # synthetic only
    seed: int = 0
    labels: Optional[str] = None  # optional JSON {filename: [0/1, ...]} for directories

    def __post_init__(self):
        log2 = math.log2(self.resolution)
        if log2 != int(log2):
            raise ValueError("resolution must be a power of two")


@dataclass
class ImageDataset:
    images: torch.Tensor  # [N, 3, R, R] in [-1, 1]
    labels: Optional[torch.Tensor] = None  # [N, A] in {0, 1}
    attributes: List[str] = field(default_factory=list)
    skipped: int = 0
    mirror_augment: bool = False
    seed: int = 0

    def __len__(self):
        return len(self.images)

    @property
    def resolution(self):
        return self.images.shape[-1]

    def batches_per_epoch(self, batch_size):
        return max(1, len(self) // batch_size)

    def batch(self, index: int, batch_size: int):
        """Minibatch number ``index``; a pure function of (seed, index).

        Each epoch uses its own seeded permutation (the final partial batch is
        dropped) and, with mirroring on, its own seeded flip mask.
        """
        per_epoch = self.batches_per_epoch(batch_size)
        epoch, j = divmod(index, per_epoch)
        g = torch.Generator()
        g.manual_seed(self.seed * 1_000_003 + epoch)
        perm = torch.randperm(len(self), generator=g)
        flips = torch.rand(len(self), generator=g) < 0.5
        idx = perm[j * batch_size:(j + 1) * batch_size]
        x = self.images[idx]
        if self.mirror_augment:
            f = flips[idx]
            x = torch.where(f[:, None, None, None], x.flip(-1), x)
        y = None if self.labels is None else self.labels[idx]
        return x, y

    def minibatches(self, batch_size: int, start: int = 0):
        i = start
        while True:
            yield self.batch(i, batch_size)[0]
            i += 1


def synth_images(labels: np.ndarray, resolution: int, rng: np.random.Generator, factors: int):
    """Render one image per label row. Columns follow ``SYNTH_ATTRIBUTES``."""
    n = len(labels)
    r = resolution
    half = r // 2
    yy, xx = np.mgrid[0:r, 0:r]
    s_lo, s_hi = max(1, r // 8), max(2, r // 5)
    size = rng.integers(s_lo, s_hi + 1, n)
    full = np.ones(n, bool)
    bright = labels[:, 0] == 1 if factors > 0 else full
    disk = labels[:, 1] == 1 if factors > 1 else ~full
    vertical = labels[:, 2] == 1 if factors > 2 else None
    right = labels[:, 3] == 1 if factors > 3 else None

    if right is None:
        cx = np.array([rng.integers(s, r - s) for s in size])
    else:
        lo = np.where(right, half + size, size)
        hi = np.where(right, r - size, half - size)
        cx = np.array([rng.integers(a, b) for a, b in zip(lo, hi)])
    cy = np.array([rng.integers(s, r - s) for s in size])

    dx = xx[None] - cx[:, None, None]
    dy = yy[None] - cy[:, None, None]
    sq = (np.abs(dx) <= size[:, None, None]) & (np.abs(dy) <= size[:, None, None])
    rad = (size + 0.5)[:, None, None]
    circ = dx ** 2 + dy ** 2 <= rad ** 2
    mask = np.where(disk[:, None, None], circ, sq)

    level = np.where(bright, rng.uniform(0.75, 0.95, n), rng.uniform(0.05, 0.25, n))
    tint = rng.uniform(-0.05, 0.05, n)
    img = np.empty((n, 3, r, r), np.float32)
    img[:, 0] = np.where(mask, (level + tint)[:, None, None], BG_LEVEL)
    img[:, 1] = np.where(mask, (level - tint)[:, None, None], BG_LEVEL)
    if vertical is None:
        img[:, 2] = BLUE_LEVEL
    else:
        phase = rng.integers(0, 4, n)[:, None, None]
        coord = np.where(vertical[:, None, None], xx[None], yy[None])
        stripe = np.where(((coord + phase) // 2) % 2 == 0, 1.0, -1.0)
        img[:, 2] = BLUE_LEVEL + STRIPE_AMP * stripe
    return img


def synth_dataset(factors: int, resolution: int = 32, count: int = 10_000, seed: int = 0,
                  mirror_augment: bool = False) -> ImageDataset:
    """Procedural images with ``factors`` independent, uniformly drawn binary attributes.

    Attributes, in order: object brightness, disk vs square, vertical vs
    horizontal background stripes, object in the right half. Object size and
    position within the allowed region vary as nuisance factors.
    """
    if not 1 <= factors <= len(SYNTH_ATTRIBUTES):
        raise ValueError(f"factors must lie in [1, {len(SYNTH_ATTRIBUTES)}]")
    if resolution < 16:
        raise ValueError("synthetic images need resolution >= 16")
    names = SYNTH_ATTRIBUTES[:factors]
    if mirror_augment and FLIP_SENSITIVE & set(names):
        raise ValueError(f"mirror augmentation would corrupt attributes {sorted(FLIP_SENSITIVE & set(names))}")
    rng = np.random.default_rng(seed)
    labels = np.zeros((count, len(SYNTH_ATTRIBUTES)), np.int64)
    labels[:, :factors] = rng.integers(0, 2, (count, factors))
    imgs = synth_images(labels, resolution, rng, factors)
    return ImageDataset(torch.from_numpy(imgs), torch.from_numpy(labels[:, :factors]), names,
                        mirror_augment=mirror_augment, seed=seed)


def _load_image(path: Path, resolution: int) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        w, h = im.size
        side = min(w, h)
        left, top = (w - side) // 2, (h - side) // 2
        im = im.crop((left, top, left + side, top + side))
        if side != resolution:
            im = im.resize((resolution, resolution), Image.BILINEAR)
        arr = np.asarray(im, np.float32)
    return arr.transpose(2, 0, 1) / 127.5 - 1.0


def load_dataset(spec: DatasetSpec) -> ImageDataset:
    """Decode, square-crop, resize and scale images to [-1, 1].

    Unreadable files are skipped and counted; an empty result is an error.
    """
    if spec.source.startswith("synthetic:"):
        factors = int(spec.source.split(":", 1)[1])
        return synth_dataset(factors, spec.resolution, spec.count, spec.seed, spec.mirror_augment)
    root = Path(spec.source)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    label_map = json.loads(Path(spec.labels).read_text()) if spec.labels else None
    arrays, labels, skipped = [], [], 0
    for p in files:
        try:
            arrays.append(_load_image(p, spec.resolution))
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            skipped += 1
            log.warning("skipping unreadable image %s: %s", p.name, exc)
            continue
        if label_map is not None:
            labels.append(label_map[p.name])
    if skipped:
        log.info("skipped %d unreadable files in %s", skipped, root)
    if not arrays:
        raise ValueError(f"no readable images in {root}")
    lab = torch.tensor(labels, dtype=torch.int64) if label_map is not None else None
    return ImageDataset(torch.from_numpy(np.stack(arrays)), lab, skipped=skipped,
                        mirror_augment=spec.mirror_augment, seed=spec.seed)
