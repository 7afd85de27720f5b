"""GAN objectives: non-saturating with R1, and WGAN-GP."""

import torch
import torch.nn.functional as F


def nonsat_g_loss(d_score_on_fake):
    """softplus(-D(G(z))), i.e. -log sigmoid(score); averaged over a batch."""
    return F.softplus(-torch.as_tensor(d_score_on_fake)).mean()


def input_gradients(disc, x, create_graph=True):
    """Per-sample gradients of ``disc`` w.r.t. its input, and the scores."""
    x = x.detach().requires_grad_(True)
    scores = disc(x)
    (grad,) = torch.autograd.grad(scores.sum(), x, create_graph=create_graph)
    return grad, scores


def r1_penalty(grad_real):
    return grad_real.flatten(1).pow(2).sum(dim=1).mean()


def nonsat_d_loss_r1(scores_real, scores_fake, grad_real, gamma=10.0):
    scores_real = torch.as_tensor(scores_real)
    scores_fake = torch.as_tensor(scores_fake)
    if scores_real.shape[0] != scores_fake.shape[0]:
        raise ValueError("real and fake batches differ in size")
    loss = F.softplus(-scores_real).mean() + F.softplus(scores_fake).mean()
    if gamma:
        loss = loss + 0.5 * gamma * r1_penalty(grad_real)
    return loss


def gradient_penalty(interpolate_grads):
    norms = interpolate_grads.flatten(1).norm(dim=1)
    return (norms - 1.0).pow(2).mean()


def wgan_gp_d_loss(scores_real, scores_fake, interpolate_grads, lambda_gp=10.0, drift=1e-3):
    scores_real = torch.as_tensor(scores_real)
    scores_fake = torch.as_tensor(scores_fake)
    loss = scores_fake.mean() - scores_real.mean()
    loss = loss + lambda_gp * gradient_penalty(interpolate_grads)
    if drift:
        loss = loss + drift * scores_real.pow(2).mean()
    return loss


def wgan_g_loss(scores_fake):
    return -torch.as_tensor(scores_fake).mean()


def interpolate_real_fake(real, fake, generator=None):
    u = torch.rand(real.shape[0], 1, 1, 1, generator=generator, dtype=real.dtype)
    return u * real + (1 - u) * fake
