"""Synthesis network g, AdaIN, noise inputs and the full generator."""

import math
from dataclasses import asdict, dataclass, fields

import torch
import torch.nn as nn
import torch.nn.functional as F

from .latent import TruncationParams, broadcast_styles, truncate_w
from .layers import LRELU_SLOPE, SQRT2, EqualizedConv2d, EqualizedLinear, pixel_norm, resample
from .mapping import MappingNetwork

ADAIN_EPS = 1e-8


@dataclass
class GeneratorConfig:
    resolution: int = 32
    z_dim: int = 64
    w_dim: int = 64
    mapping_depth: int = 8
    mapping_lr_mul: float = 0.01
    mapping_final_activation: bool = True
    input_mode: str = "constant"  # or "traditional"
    use_styles: bool = True
    use_noise: bool = True
    resample: str = "binomial"  # or "nearest"
    channel_base: int = 64
    channel_min: int = 8
    latent_distribution: str = "sphere"

    def __post_init__(self):
        log2 = math.log2(self.resolution)
        if self.resolution < 4 or log2 != int(log2):
            raise ValueError(f"resolution must be a power of two >= 4, got {self.resolution}")
        if self.input_mode not in ("constant", "traditional"):
            raise ValueError(f"unknown input_mode {self.input_mode!r}")
        if self.resample not in ("binomial", "nearest"):
            raise ValueError(f"unknown resample mode {self.resample!r}")

    @property
    def num_levels(self) -> int:
        return int(math.log2(self.resolution)) - 1

    @property
    def num_styles(self) -> int:
        return 2 * self.num_levels

    def channels(self, level: int) -> int:
        return max(self.channel_base // (2 ** level), self.channel_min)

    def slot_resolution(self, slot: int) -> int:
        return 4 * 2 ** (slot // 2)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


# Table 1 ladder as architecture flags; loss and mixing live in the training presets.
GENERATOR_PRESETS = {
    "a": dict(input_mode="traditional", use_styles=False, use_noise=False, mapping_depth=0,
              resample="nearest"),
    "b": dict(input_mode="traditional", use_styles=False, use_noise=False, mapping_depth=0),
    "c": dict(input_mode="traditional", use_styles=True, use_noise=False, mapping_depth=8),
    "d": dict(input_mode="constant", use_styles=True, use_noise=False, mapping_depth=8),
    "e": dict(input_mode="constant", use_styles=True, use_noise=True, mapping_depth=8),
    "f": dict(input_mode="constant", use_styles=True, use_noise=True, mapping_depth=8),
}


def adain(x: torch.Tensor, y_s: torch.Tensor, y_b: torch.Tensor, eps: float = ADAIN_EPS) -> torch.Tensor:
    """Instance-normalize each channel of ``x`` then apply per-channel scale and bias.

    Uses the population std over spatial positions; ``eps`` is added to the
    std so constant channels map to ``y_b``.
    """
    if x.shape[1] != y_s.shape[-1] or x.shape[1] != y_b.shape[-1]:
        raise ValueError("channel count mismatch between features and style")
    xc = x - x.mean(dim=(2, 3), keepdim=True)
    # second centering pass removes the rounding residue of the first mean
    xc = xc - xc.mean(dim=(2, 3), keepdim=True)
    var = xc.pow(2).mean(dim=(2, 3), keepdim=True)
    # clamp keeps the sqrt backward finite on exactly-constant channels
    sigma = var.clamp_min(1e-30).sqrt()
    return y_s[..., None, None] * xc / (sigma + eps) + y_b[..., None, None]


def apply_noise(x: torch.Tensor, noise: torch.Tensor, scalings: torch.Tensor) -> torch.Tensor:
    """Broadcast a single-channel noise image to every channel with per-channel weights."""
    if noise.shape[-2:] != x.shape[-2:]:
        raise ValueError(f"noise size {tuple(noise.shape[-2:])} != feature size {tuple(x.shape[-2:])}")
    return x + scalings.view(1, -1, 1, 1) * noise


class StyleSite(nn.Module):
    """One (upsample?) -> (conv?) -> noise -> bias -> lrelu -> AdaIN step."""

    def __init__(self, in_channels, out_channels, w_dim, conv, upsample, use_noise, use_styles,
                 resample_mode):
        super().__init__()
        self.upsample = upsample
        self.use_noise = use_noise
        self.use_styles = use_styles
        self.resample_mode = resample_mode
        self.channels = out_channels
        self.conv = EqualizedConv2d(in_channels, out_channels, 3, bias=False) if conv else None
        self.noise_strength = nn.Parameter(torch.zeros(out_channels)) if use_noise else None
        self.bias = nn.Parameter(torch.zeros(out_channels))
        if use_styles:
            bias_init = torch.cat([torch.ones(out_channels), torch.zeros(out_channels)])
            self.affine = EqualizedLinear(w_dim, 2 * out_channels, gain=1.0, bias_init=bias_init)
        else:
            self.affine = None

    def style(self, w):
        y = self.affine(w)
        return y[..., : self.channels], y[..., self.channels:]

    def forward(self, x, w, noise=None):
        if self.upsample:
            x = resample(x, "up", self.resample_mode)
        if self.conv is not None:
            x = self.conv(x)
        if self.use_noise:
            x = apply_noise(x, noise, self.noise_strength)
        x = F.leaky_relu(x + self.bias.view(1, -1, 1, 1), LRELU_SLOPE)
        if self.use_styles:
            y_s, y_b = self.style(w)
            return adain(x, y_s, y_b)
        return pixel_norm(x)


class SynthesisNetwork(nn.Module):
    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        c0 = config.channels(0)
        if config.input_mode == "constant":
            self.const = nn.Parameter(torch.ones(1, c0, 4, 4))
            self.input_layer = None
        else:
            self.const = None
            self.input_layer = EqualizedLinear(config.w_dim, c0 * 16, bias=False, gain=SQRT2 / 4)
        sites = []
        for level in range(config.num_levels):
            ch = config.channels(level)
            prev = config.channels(max(level - 1, 0))
            first = level == 0
            sites.append(StyleSite(prev, ch, config.w_dim, conv=not first, upsample=not first,
                                   use_noise=config.use_noise, use_styles=config.use_styles,
                                   resample_mode=config.resample))
            sites.append(StyleSite(ch, ch, config.w_dim, conv=True, upsample=False,
                                   use_noise=config.use_noise, use_styles=config.use_styles,
                                   resample_mode=config.resample))
        self.sites = nn.ModuleList(sites)
        self.to_rgb = EqualizedConv2d(config.channels(config.num_levels - 1), 3, 1, gain=1.0)

    @property
    def num_styles(self) -> int:
        return len(self.sites)

    def noise_shapes(self):
        return [(1, self.config.slot_resolution(i), self.config.slot_resolution(i))
                for i in range(self.num_styles)]

    def make_noise(self, batch: int, generator=None, dtype=None):
        dtype = dtype or self.to_rgb.weight.dtype
        return [torch.randn(batch, *shape, generator=generator, dtype=dtype)
                for shape in self.noise_shapes()]

    def forward(self, styles, noise=None, rng=None, return_activations=False):
        n, num, _ = styles.shape
        if num != self.num_styles:
            raise ValueError(f"expected {self.num_styles} style slots, got {num}")
        if self.config.use_noise and noise is None:
            noise = self.make_noise(n, rng, styles.dtype)
        if noise is not None and len(noise) != self.num_styles:
            raise ValueError("one noise image per style slot required")
        if self.const is not None:
            x = self.const.expand(n, -1, -1, -1)
        else:
            x = self.input_layer(styles[:, 0]).view(n, -1, 4, 4)
        acts = []
        for i, site in enumerate(self.sites):
            x = site(x, styles[:, i], None if noise is None or not self.config.use_noise else noise[i])
            if return_activations:
                acts.append(x)
        img = self.to_rgb(x)
        if return_activations:
            return img, acts
        return img


def affine_style(synthesis: SynthesisNetwork, w: torch.Tensor, site: int):
    """Return (y_s, y_b) produced by the learned affine map of ``site``."""
    if not 0 <= site < synthesis.num_styles:
        raise IndexError(f"style site {site} out of range [0, {synthesis.num_styles})")
    s = synthesis.sites[site]
    if s.affine is None:
        raise ValueError("styles are disabled in this configuration")
    return s.style(w)


def synthesize(synthesis: SynthesisNetwork, styles, noise=None, config=None):
    if config is not None and config != synthesis.config:
        raise ValueError("config does not match the synthesis network parameters")
    return synthesis(styles, noise=noise)


class Generator(nn.Module):
    """Mapping network plus synthesis network: G = g(f(z))."""

    def __init__(self, config: GeneratorConfig, seed: int = 0):
        super().__init__()
        self.config = config
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.mapping = MappingNetwork(config.z_dim, config.w_dim, config.mapping_depth,
                                          config.mapping_lr_mul, config.mapping_final_activation)
            self.synthesis = SynthesisNetwork(config)
        self.register_buffer("w_avg", torch.zeros(config.w_dim))

    @property
    def num_styles(self) -> int:
        return self.synthesis.num_styles

    def styles(self, z, psi=1.0, cutoff=None):
        s = broadcast_styles(self.mapping(z), self.num_styles)
        if psi != 1.0:
            cutoff = self.num_styles if cutoff is None else cutoff
            s = truncate_w(s, TruncationParams(psi, self.w_avg, cutoff))
        return s

    def forward(self, z, noise=None, rng=None, psi=1.0, cutoff=None):
        return self.synthesis(self.styles(z, psi, cutoff), noise=noise, rng=rng)

    def synthesis_fn(self):
        """Callable ``(w, rng) -> images`` sharing one noise draw across the batch."""
        def render(w, rng=None):
            w = w.to(self.w_avg.dtype)
            styles = w if w.dim() == 3 else broadcast_styles(w, self.num_styles)
            noise = None
            if self.config.use_noise:
                noise = [n.expand(styles.shape[0], -1, -1, -1)
                         for n in self.synthesis.make_noise(1, rng, styles.dtype)]
            return self.synthesis(styles, noise=noise)
        return render
