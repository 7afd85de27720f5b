"""Adversarial training: alternating D/G updates, style mixing, generator EMA."""

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import torch

from .discriminator import Discriminator
from .latent import broadcast_styles, sample_z_from
from .losses import (input_gradients, interpolate_real_fake, nonsat_d_loss_r1, nonsat_g_loss,
                     r1_penalty, gradient_penalty, wgan_g_loss, wgan_gp_d_loss)
from .synthesis import Generator, GeneratorConfig

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    loss_kind: str = "nonsat_r1"  # or "wgan_gp"
    gamma: float = 10.0
    lambda_gp: float = 10.0
    drift: float = 1e-3
    p_mix: float = 0.9
    batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.0
    beta2: float = 0.99
    adam_eps: float = 1e-8
    ema_decay: float = 0.999
    total_images: int = 200_000
    seed: int = 0
    d_channel_base: int = 64
    mbstd_group: int = 4

    def __post_init__(self):
        if self.loss_kind not in ("nonsat_r1", "wgan_gp"):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not 0.0 <= self.p_mix <= 1.0:
            raise ValueError("p_mix must lie in [0, 1]")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


def mixed_style_sequence(w1, w2, crossover, num_styles):
    """Style slots ``[0, crossover)`` take ``w1``; the rest take ``w2``.

    Accepts single vectors with an integer crossover or batches ``[N, D]``
    with one crossover per row.
    """
    single = w1.dim() == 1
    if single:
        w1, w2 = w1[None], w2[None]
    crossover = torch.as_tensor(crossover).reshape(-1)
    if ((crossover < 0) | (crossover > num_styles)).any():
        raise ValueError(f"crossover outside [0, {num_styles}]")
    slots = torch.arange(num_styles)
    first = (slots[None, :] < crossover[:, None])[..., None]
    out = torch.where(first, broadcast_styles(w1, num_styles), broadcast_styles(w2, num_styles))
    return out[0] if single else out


@torch.no_grad()
def update_ema(ema, params, decay):
    """``ema <- decay * ema + (1 - decay) * params``, elementwise.

    Works on two modules (parameters averaged, buffers copied) or two
    sequences of tensors.
    """
    if isinstance(ema, torch.nn.Module):
        ema_p, src_p = list(ema.parameters()), list(params.parameters())
        for b_ema, b in zip(ema.buffers(), params.buffers()):
            b_ema.copy_(b)
    else:
        ema_p, src_p = list(ema), list(params)
    if len(ema_p) != len(src_p):
        raise ValueError("parameter count mismatch")
    for e, p in zip(ema_p, src_p):
        if e.shape != p.shape:
            raise ValueError(f"shape mismatch {tuple(e.shape)} vs {tuple(p.shape)}")
        e.mul_(decay).add_(p, alpha=1.0 - decay)
    return ema


def _set_requires_grad(module, flag):
    for p in module.parameters():
        p.requires_grad_(flag)


class Trainer:
    """Owns G, its EMA copy, D, both optimizers and the sampling stream."""

    def __init__(self, gen_config: GeneratorConfig, train_config: TrainConfig, dtype=torch.float32):
        self.gen_config = gen_config
        self.config = train_config
        seed = train_config.seed
        self.G = Generator(gen_config, seed=seed).to(dtype)
        self.G_ema = copy.deepcopy(self.G).eval()
        _set_requires_grad(self.G_ema, False)
        self.D = Discriminator(gen_config.resolution, train_config.d_channel_base, gen_config.channel_min,
                               train_config.mbstd_group, resample_mode=gen_config.resample,
                               seed=seed + 1).to(dtype)
        adam = dict(lr=train_config.lr, betas=(train_config.beta1, train_config.beta2),
                    eps=train_config.adam_eps)
        self.opt_g = torch.optim.Adam(self.G.parameters(), **adam)
        self.opt_d = torch.optim.Adam(self.D.parameters(), **adam)
        self.rng = torch.Generator()
        self.rng.manual_seed(seed + 2)
        self.step = 0
        self.images_seen = 0
        self.dump_dir: Optional[Path] = None

    @property
    def num_styles(self):
        return self.G.num_styles

    def sample_styles(self, n):
        cfg = self.gen_config
        z = sample_z_from(self.rng, n, cfg.z_dim, cfg.latent_distribution, self.G.w_avg.dtype)
        w = self.G.mapping(z)
        if self.config.p_mix <= 0:
            return broadcast_styles(w, self.num_styles)
        z2 = sample_z_from(self.rng, n, cfg.z_dim, cfg.latent_distribution, self.G.w_avg.dtype)
        w2 = self.G.mapping(z2)
        mixed = torch.rand(n, generator=self.rng) < self.config.p_mix
        cross = torch.randint(1, max(self.num_styles, 2), (n,), generator=self.rng)
        cross = torch.where(mixed, cross, torch.full_like(cross, self.num_styles))
        return mixed_style_sequence(w, w2, cross, self.num_styles)

    def _check(self, logs):
        bad = {k: v for k, v in logs.items() if isinstance(v, float) and not math.isfinite(v)}
        if not bad:
            return
        state = {"step": self.step, "images_seen": self.images_seen, "logs": logs}
        if self.dump_dir is not None:
            self.dump_dir.mkdir(parents=True, exist_ok=True)
            (self.dump_dir / f"diverged_step{self.step}.json").write_text(json.dumps(state, default=str))
        raise TrainingDivergedError(f"non-finite loss at step {self.step}: {bad}", state)

    def d_step(self, real):
        cfg = self.config
        n = real.shape[0]
        _set_requires_grad(self.D, True)
        with torch.no_grad():
            fake = self.G.synthesis(self.sample_styles(n), rng=self.rng)
        self.opt_d.zero_grad(set_to_none=True)
        if cfg.loss_kind == "nonsat_r1":
            if cfg.gamma > 0:
                grad_real, s_real = input_gradients(self.D, real)
            else:
                grad_real, s_real = None, self.D(real)
            s_fake = self.D(fake)
            loss = nonsat_d_loss_r1(s_real, s_fake, grad_real, cfg.gamma)
            reg = r1_penalty(grad_real).item() if grad_real is not None else 0.0
        else:
            x_hat = interpolate_real_fake(real, fake, self.rng)
            grads, _ = input_gradients(self.D, x_hat)
            s_real = self.D(real)
            s_fake = self.D(fake)
            loss = wgan_gp_d_loss(s_real, s_fake, grads, cfg.lambda_gp, cfg.drift)
            reg = gradient_penalty(grads).item()
        loss.backward()
        self.opt_d.step()
        return loss.item(), reg

    def g_step(self, n):
        _set_requires_grad(self.D, False)
        self.opt_g.zero_grad(set_to_none=True)
        fake = self.G.synthesis(self.sample_styles(n), rng=self.rng)
        scores = self.D(fake)
        loss = nonsat_g_loss(scores) if self.config.loss_kind == "nonsat_r1" else wgan_g_loss(scores)
        loss.backward()
        self.opt_g.step()
        _set_requires_grad(self.D, True)
        return loss.item()

    def train_step(self, real):
        """One D update, one G update, then the EMA update."""
        if real.shape[-1] != self.gen_config.resolution:
            raise ValueError("real batch resolution does not match the generator")
        t0 = time.perf_counter()
        real = real.to(self.G.w_avg.dtype)
        d_loss, reg = self.d_step(real)
        g_loss = self.g_step(real.shape[0])
        update_ema(self.G_ema, self.G, self.config.ema_decay)
        self.step += 1
        self.images_seen += real.shape[0]
        logs = {"step": self.step, "images_seen": self.images_seen, "d_loss": d_loss, "g_loss": g_loss,
                "r1" if self.config.loss_kind == "nonsat_r1" else "gp": reg,
                "time": time.perf_counter() - t0}
        self._check(logs)
        return logs

    # -- checkpoint support -------------------------------------------------

    def state_tensors(self):
        tensors = {}
        for prefix, module in (("G", self.G), ("G_ema", self.G_ema), ("D", self.D)):
            for k, v in module.state_dict().items():
                tensors[f"{prefix}.{k}"] = v
        meta = {"step": self.step, "images_seen": self.images_seen}
        for name, opt in (("opt_g", self.opt_g), ("opt_d", self.opt_d)):
            sd = opt.state_dict()
            for idx, st in sd["state"].items():
                for k, v in st.items():
                    tensors[f"{name}.state.{idx}.{k}"] = torch.as_tensor(v)
            meta[f"{name}.param_groups"] = sd["param_groups"]
        tensors["rng.train"] = self.rng.get_state()
        return tensors, meta

    def load_state_tensors(self, tensors, meta):
        for prefix, module in (("G", self.G), ("G_ema", self.G_ema), ("D", self.D)):
            sd = {k[len(prefix) + 1:]: v for k, v in tensors.items() if k.startswith(prefix + ".")}
            module.load_state_dict(sd)
        for name, opt in (("opt_g", self.opt_g), ("opt_d", self.opt_d)):
            state = {}
            for k, v in tensors.items():
                if k.startswith(name + ".state."):
                    idx, key = k[len(name) + 7:].split(".", 1)
                    state.setdefault(int(idx), {})[key] = v.clone()
            opt.load_state_dict({"state": state, "param_groups": meta[f"{name}.param_groups"]})
        self.rng.set_state(tensors["rng.train"].clone())
        self.step = meta["step"]
        self.images_seen = meta["images_seen"]
