"""Perceptual path length in Z (slerp) and W (lerp)."""

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch

from ..distance import crop_center, get_distance
from ..latent import lerp, sample_z_from, slerp

log = logging.getLogger(__name__)


@dataclass
class PathLengthConfig:
    space: str = "w"
    epsilon: float = 1e-4
    sample_count: int = 10_000
    endpoints_only: bool = False
    crop: bool = False
    crop_fraction: float = 0.75
    metric: str = "proxy"
    seed: int = 0
    batch_size: int = 250
    z_dim: int = 64
    distribution: str = "sphere"

    def __post_init__(self):
        if self.space not in ("z", "w"):
            raise ValueError("space must be 'z' or 'w'")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")

    def to_dict(self):
        return asdict(self)


def _dtype_of(fn, default=torch.float64):
    params = getattr(fn, "parameters", None)
    if params is not None:
        for p in params():
            return p.dtype
    return default


def _identity(x):
    return x


def path_length_samples(generator, mapper, cfg: PathLengthConfig, endpoint_sampler=None, distance=None):
    """Per-sample values ``d(G(a), G(b)) / eps^2``.

    ``generator(latents, rng)`` renders images from W vectors (or from Z for
    generators without a mapping network); ``mapper`` maps Z to W and may be
    ``None`` for the identity. ``endpoint_sampler(rng, n)`` overrides the
    default draw of two latent batches from P(z).
    """
    mapper = mapper or _identity
    dist = distance or get_distance(cfg.metric)
    rng = torch.Generator()
    rng.manual_seed(cfg.seed)
    mdtype = _dtype_of(mapper)
    out = []
    done = 0
    while done < cfg.sample_count:
        n = min(cfg.batch_size, cfg.sample_count - done)
        if endpoint_sampler is not None:
            z1, z2 = endpoint_sampler(rng, n)
            z1, z2 = z1.to(torch.float64), z2.to(torch.float64)
        else:
            z1 = sample_z_from(rng, n, cfg.z_dim, cfg.distribution, torch.float64)
            z2 = sample_z_from(rng, n, cfg.z_dim, cfg.distribution, torch.float64)
        if cfg.endpoints_only:
            t = torch.randint(0, 2, (n,), generator=rng).to(torch.float64)
        else:
            t = torch.rand(n, generator=rng, dtype=torch.float64)
        with torch.no_grad():
            if cfg.space == "z":
                a = slerp(z1, z2, t)
                b = slerp(z1, z2, t + cfg.epsilon)
                lat = mapper(torch.cat([a, b]).to(mdtype))
            else:
                w1 = mapper(z1.to(mdtype)).to(torch.float64)
                w2 = mapper(z2.to(mdtype)).to(torch.float64)
                lat = torch.cat([lerp(w1, w2, t), lerp(w1, w2, t + cfg.epsilon)])
            gdtype = _dtype_of(generator, lat.dtype)
            imgs = generator(lat.to(gdtype), rng)
            if cfg.crop:
                imgs = crop_center(imgs, cfg.crop_fraction)
            d = dist(imgs[:n], imgs[n:]).to(torch.float64) / cfg.epsilon ** 2
        vals = d.numpy()
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            i = int(bad[0])
            log.error("non-finite path length at sample %d (t=%s)", done + i, float(t[i]))
            raise FloatingPointError(f"non-finite perceptual distance at sample {done + i}")
        out.append(vals)
        done += n
    return np.concatenate(out)


def perceptual_path_length(generator, mapper, cfg: PathLengthConfig, endpoint_sampler=None,
                           distance=None, return_stderr=False):
    samples = path_length_samples(generator, mapper, cfg, endpoint_sampler, distance)
    mean = math.fsum(samples.tolist()) / len(samples)
    if return_stderr:
        stderr = float(samples.std(ddof=1) / math.sqrt(len(samples))) if len(samples) > 1 else float("nan")
        return mean, stderr
    return mean
