"""Latent spaces Z and W: sampling, interpolation and truncation."""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch


SLERP_DEGENERATE_SIN = 1e-6


def _seeded(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


def sample_z(rng_seed: int, count: int, dim: int = 64, distribution: str = "sphere",
             dtype=torch.float32) -> torch.Tensor:
    """Draw ``count`` latents of size ``dim``.

    ``sphere`` draws a standard Gaussian and projects it to the unit
    hypersphere; ``gaussian`` returns the raw draw.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    z = torch.randn(count, dim, generator=_seeded(rng_seed), dtype=torch.float64)
    if distribution == "sphere":
        z = z / z.norm(dim=1, keepdim=True)
    elif distribution != "gaussian":
        raise ValueError(f"unknown latent distribution {distribution!r}")
    return z.to(dtype)


def sample_z_from(generator: torch.Generator, count: int, dim: int,
                  distribution: str = "sphere", dtype=torch.float32) -> torch.Tensor:
    """Same as :func:`sample_z` but drawing from a caller-owned stream."""
    z = torch.randn(count, dim, generator=generator, dtype=torch.float64)
    if distribution == "sphere":
        z = z / z.norm(dim=1, keepdim=True)
    return z.to(dtype)


def slerp(z1: torch.Tensor, z2: torch.Tensor, t, return_degenerate: bool = False):
    """Spherical interpolation along the great circle from ``z1`` to ``z2``.

    Works on single vectors or batches (last axis is the vector). ``t`` may be a
    scalar or broadcast against the batch; values outside [0, 1] extrapolate
    along the same circle. Pairs with ``|sin(omega)| < 1e-6`` fall back to a
    normalized lerp; pass ``return_degenerate=True`` to get that mask too.
    """
    t = torch.as_tensor(t, dtype=z1.dtype, device=z1.device)
    if t.dim() == 1 and z1.dim() == 2:
        t = t[:, None]
    cos = (z1 * z2).sum(-1, keepdim=True).clamp(-1.0, 1.0)
    omega = torch.acos(cos)
    sin = torch.sin(omega)
    degenerate = sin.abs() < SLERP_DEGENERATE_SIN
    safe_sin = torch.where(degenerate, torch.ones_like(sin), sin)
    a = torch.sin((1 - t) * omega) / safe_sin
    b = torch.sin(t * omega) / safe_sin
    out = a * z1 + b * z2
    if degenerate.any():
        fallback = lerp(z1, z2, t)
        fallback = fallback / fallback.norm(dim=-1, keepdim=True).clamp_min(1e-30)
        out = torch.where(degenerate, fallback, out)
    if return_degenerate:
        return out, degenerate.squeeze(-1)
    return out


def lerp(w1: torch.Tensor, w2: torch.Tensor, t) -> torch.Tensor:
    if w1.shape[-1] != w2.shape[-1]:
        raise ValueError(f"dimension mismatch: {w1.shape[-1]} vs {w2.shape[-1]}")
    t = torch.as_tensor(t, dtype=w1.dtype, device=w1.device)
    if t.dim() == 1 and w1.dim() == 2:
        t = t[:, None]
    return w1 + (w2 - w1) * t


@torch.no_grad()
def estimate_w_center(mapper: Callable[[torch.Tensor], torch.Tensor], sample_count: int = 100_000,
                      rng_seed: int = 0, dim: int = 64, distribution: str = "sphere",
                      chunk: int = 10_000) -> torch.Tensor:
    """Mean of ``mapper(z)`` over ``sample_count`` fresh latents."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    z = sample_z(rng_seed, sample_count, dim, distribution, dtype=torch.float64)
    total = None
    for start in range(0, sample_count, chunk):
        zc = z[start:start + chunk]
        w = mapper(zc.to(_mapper_dtype(mapper))).to(torch.float64)
        s = w.sum(dim=0)
        total = s if total is None else total + s
    return (total / sample_count).to(_mapper_dtype(mapper))


def _mapper_dtype(mapper) -> torch.dtype:
    params = getattr(mapper, "parameters", None)
    if params is not None:
        for p in params():
            return p.dtype
    return torch.float64


def broadcast_styles(w: torch.Tensor, num_styles: int) -> torch.Tensor:
    """[N, D] -> [N, L, D] with identical entries per slot."""
    return w.unsqueeze(1).expand(-1, num_styles, -1)


@dataclass
class TruncationParams:
    psi: float
    w_bar: torch.Tensor
    layer_cutoff: int


def truncate_w(styles: torch.Tensor, params: TruncationParams) -> torch.Tensor:
    """Pull style slots ``< layer_cutoff`` toward ``w_bar`` by factor ``psi``.

    ``styles`` is ``[..., L, D]``; slots at or past the cutoff are copied
    through untouched.
    """
    num_styles = styles.shape[-2]
    cutoff = params.layer_cutoff
    if not 0 <= cutoff <= num_styles:
        raise ValueError(f"layer_cutoff {cutoff} outside [0, {num_styles}]")
    out = styles.clone()
    if params.psi == 1.0:
        return out
    w_bar = params.w_bar.to(styles.dtype)
    head = styles[..., :cutoff, :]
    out[..., :cutoff, :] = w_bar + params.psi * (head - w_bar)
    return out


def save_latents(path, values: torch.Tensor, space: str, seed: Optional[int] = None) -> None:
    """Write ``values`` as little-endian float32 plus a ``.json`` sidecar."""
    if space not in ("Z", "W"):
        raise ValueError("space must be 'Z' or 'W'")
    path = Path(path)
    arr = np.ascontiguousarray(values.detach().cpu().numpy(), dtype="<f4")
    arr.tofile(path)
    meta = {"dim": int(arr.shape[-1]), "count": int(arr.size // arr.shape[-1]),
            "space": space, "seed": seed}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta))


def load_latents(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    arr = np.fromfile(path, dtype="<f4").reshape(-1, meta["dim"])
    return torch.from_numpy(arr.copy()), meta


def arc_angle(z1: torch.Tensor, z2: torch.Tensor) -> torch.Tensor:
    return torch.acos((z1 * z2).sum(-1).clamp(-1.0, 1.0))


__all__ = [
    "sample_z", "sample_z_from", "slerp", "lerp", "estimate_w_center", "broadcast_styles",
    "TruncationParams", "truncate_w", "save_latents", "load_latents", "arc_angle",
]
