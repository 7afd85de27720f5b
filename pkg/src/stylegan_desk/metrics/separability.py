"""Linear separability of latent points with respect to binary image attributes."""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np
import torch
import torch.nn.functional as F

from ..discriminator import Discriminator
from ..latent import sample_z_from

log = logging.getLogger(__name__)


# -- linear SVM -----------------------------------------------------------------


@dataclass
class LinearSVM:
    normal: np.ndarray
    offset: float
    loss_history: List[float] = field(default_factory=list)

    def decision(self, x):
        return np.asarray(x, np.float64) @ self.normal + self.offset

    def predict(self, x):
        return (self.decision(x) > 0).astype(np.int64)


def svm_objective(normal, offset, x, y, lam):
    margins = y * (x @ normal + offset)
    return float(np.maximum(0.0, 1.0 - margins).mean() + 0.5 * lam * normal @ normal)


def fit_linear_svm(points, labels, C=1.0, epochs=100, batch_size=64, lr=0.5, seed=0):
    """Soft-margin linear SVM trained by minibatch subgradient descent.

    Minimizes ``C * sum(hinge) + 0.5 * |normal|^2`` (divided by ``C * N`` so the
    step size is independent of N) with step ``lr / sqrt(1 + t / steps_per_epoch)``.
    The returned hyperplane is the running average of the iterates. Inputs are
    standardized internally and the plane is mapped back to raw coordinates.
    ``loss_history`` holds the averaged plane's objective after every epoch.
    """
    x = np.asarray(points, np.float64)
    if x.ndim == 1:
        x = x[:, None]
    lab = np.asarray(labels).astype(np.int64).reshape(-1)
    if len(lab) != len(x):
        raise ValueError("points and labels differ in length")
    if np.unique(lab).size < 2:
        raise ValueError("SVM needs both classes present")
    y = 2.0 * lab - 1.0
    n, d = x.shape
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    xs = (x - mean) / std
    lam = 1.0 / (C * n)
    rng = np.random.default_rng(seed)

    wv, b = np.zeros(d), 0.0
    w_avg, b_avg, count = np.zeros(d), 0.0, 0
    steps_per_epoch = max(1, math.ceil(n / batch_size))
    t = 0
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb, yb = xs[idx], y[idx]
            active = yb * (xb @ wv + b) < 1.0
            gw = lam * wv - (yb[active, None] * xb[active]).sum(axis=0) / len(idx)
            gb = -yb[active].sum() / len(idx)
            eta = lr / math.sqrt(1.0 + t / steps_per_epoch)
            wv = wv - eta * gw
            b = b - eta * gb
            t += 1
            count += 1
            w_avg += (wv - w_avg) / count
            b_avg += (b - b_avg) / count
        history.append(svm_objective(w_avg, b_avg, xs, y, lam))
    normal = w_avg / std
    offset = float(b_avg - normal @ mean)
    return LinearSVM(normal, offset, history)


def conditional_entropy(pred, true):
    """H(Y | X) in bits from the empirical 2x2 table of (X = pred, Y = true)."""
    x = np.asarray(pred).astype(np.int64).reshape(-1)
    y = np.asarray(true).astype(np.int64).reshape(-1)
    if len(x) != len(y) or len(x) == 0:
        raise ValueError("need equal, non-empty label vectors")
    n = len(x)
    h = 0.0
    for xv in (0, 1):
        nx = np.count_nonzero(x == xv)
        if nx == 0:
            continue
        for yv in (0, 1):
            nxy = np.count_nonzero((x == xv) & (y == yv))
            if nxy:
                h -= nxy / n * math.log2(nxy / nx)
    return max(h, 0.0)


# -- separability score -------------------------------------------------------


@dataclass
class SeparabilityConfig:
    space: str = "w"
    pool_size: int = 20_000
    keep: int = 10_000
    svm_C: float = 1.0
    svm_epochs: int = 100
    svm_batch_size: int = 64
    svm_lr: float = 0.5
    entropy_base: str = "bits"  # score = exp(sum H) with H in this unit
    seed: int = 0
    batch_size: int = 500
    z_dim: int = 64
    distribution: str = "sphere"

    def __post_init__(self):
        if self.space not in ("z", "w"):
            raise ValueError("space must be 'z' or 'w'")
        if self.keep != self.pool_size // 2:
            raise ValueError("keep must be half of pool_size")

    def to_dict(self):
        return asdict(self)


@dataclass
class SeparabilityResult:
    score: float
    entropies: List[float]
    skipped: List[int]
    convention: str

    def __float__(self):
        return self.score


def _dtype_of(fn, default=torch.float64):
    params = getattr(fn, "parameters", None)
    if params is not None:
        for p in params():
            return p.dtype
    return default


@torch.no_grad()
def _classify_pool(generator, mapper, classifiers, cfg):
    rng = torch.Generator()
    rng.manual_seed(cfg.seed)
    lat, logits = [], []
    mdtype = _dtype_of(mapper) if mapper is not None else torch.float64
    for start in range(0, cfg.pool_size, cfg.batch_size):
        n = min(cfg.batch_size, cfg.pool_size - start)
        z = sample_z_from(rng, n, cfg.z_dim, cfg.distribution, mdtype)
        w = mapper(z) if mapper is not None else z
        imgs = generator(w, rng)
        cols = [torch.as_tensor(c(imgs)).reshape(n, -1) for c in classifiers]
        logits.append(torch.cat(cols, dim=1).to(torch.float64).numpy())
        lat.append((z if cfg.space == "z" else w).to(torch.float64).numpy())
    return np.concatenate(lat), np.concatenate(logits)


def separability_from_logits(latents, logits, cfg: SeparabilityConfig):
    """Confidence filtering, SVM fit and entropy for every attribute column."""
    entropies, skipped = [], []
    logits = np.asarray(logits, np.float64)
    if logits.ndim == 1:
        logits = logits[:, None]
    for i in range(logits.shape[1]):
        conf = np.abs(1.0 / (1.0 + np.exp(-logits[:, i])) - 0.5)
        keep = np.argsort(-conf, kind="stable")[: cfg.keep]
        y = (logits[keep, i] > 0).astype(np.int64)
        if np.unique(y).size < 2:
            log.warning("attribute %d has a single class after filtering; skipped", i)
            skipped.append(i)
            continue
        svm = fit_linear_svm(latents[keep], y, cfg.svm_C, cfg.svm_epochs, cfg.svm_batch_size,
                             cfg.svm_lr, seed=cfg.seed + i)
        h = conditional_entropy(svm.predict(latents[keep]), y)
        entropies.append(h if cfg.entropy_base == "bits" else h * math.log(2.0))
    score = math.exp(math.fsum(entropies))
    convention = f"exp(sum H), H in {cfg.entropy_base}"
    return SeparabilityResult(score, entropies, skipped, convention)


def separability_score(generator, mapper, classifiers, cfg: SeparabilityConfig):
    """exp of the summed conditional entropies over all attribute classifiers.

    One latent pool is generated and labeled by every classifier; each
    attribute then keeps its own most-confident half.
    """
    latents, logits = _classify_pool(generator, mapper, classifiers, cfg)
    return separability_from_logits(latents, logits, cfg)


# -- attribute classifiers ------------------------------------------------------


@dataclass
class ClassifierConfig:
    lr: float = 1e-3
    batch_size: int = 8
    train_images: int = 20_000
    channel_base: int = 32
    seed: int = 0


def train_attribute_classifier(images, labels, cfg: ClassifierConfig = None):
    """Discriminator-architecture binary classifier (no minibatch stddev)."""
    cfg = cfg or ClassifierConfig()
    if labels is None:
        raise ValueError("attribute classifier needs labeled images")
    labels = torch.as_tensor(labels).reshape(-1).to(torch.float32)
    if len(labels) != len(images):
        raise ValueError("images and labels differ in length")
    if torch.unique(labels).numel() < 2:
        raise ValueError("attribute labels contain a single class")
    net = Discriminator(images.shape[-1], cfg.channel_base, mbstd_group=0, seed=cfg.seed)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr, betas=(0.0, 0.99), eps=1e-8)
    g = torch.Generator()
    g.manual_seed(cfg.seed)
    seen = 0
    n = len(images)
    while seen < cfg.train_images:
        order = torch.randperm(n, generator=g)
        for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = F.binary_cross_entropy_with_logits(net(images[idx]), labels[idx])
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            seen += cfg.batch_size
            if seen >= cfg.train_images:
                break
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return net
