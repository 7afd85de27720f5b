"""Frechet distance between Gaussian fits of two feature sets."""

import numpy as np

JITTER = 1e-6
NEG_EIG_TOL = 1e-8
ILL_CONDITIONED = 1e12


def _sqrtm_psd(s):
    vals, vecs = np.linalg.eigh(s)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _trace_sqrt_product(s1, s2):
    """tr((s1 s2)^(1/2)) via the symmetric form s1^(1/2) s2 s1^(1/2)."""
    r = _sqrtm_psd(s1)
    m = r @ s2 @ r
    m = 0.5 * (m + m.T)
    eig = np.linalg.eigvalsh(m)
    scale = max(1.0, float(np.abs(eig).max(initial=0.0)))
    if eig.min(initial=0.0) < -NEG_EIG_TOL * scale:
        raise ValueError(f"covariance product has negative eigenvalue {eig.min():.3e}")
    return float(np.sqrt(np.clip(eig, 0.0, None)).sum())


def frechet_distance(mu1, sigma1, mu2, sigma2):
    """||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2))."""
    mu1, mu2 = np.atleast_1d(np.asarray(mu1, np.float64)), np.atleast_1d(np.asarray(mu2, np.float64))
    s1, s2 = np.atleast_2d(np.asarray(sigma1, np.float64)), np.atleast_2d(np.asarray(sigma2, np.float64))
    if mu1.shape != mu2.shape or s1.shape != s2.shape:
        raise ValueError("feature dimensions differ")
    # both orders are evaluated and averaged so the result is exactly symmetric
    tr_sqrt = 0.5 * (_trace_sqrt_product(s1, s2) + _trace_sqrt_product(s2, s1))
    diff = mu1 - mu2
    return float(diff @ diff + np.trace(s1) + np.trace(s2) - 2.0 * tr_sqrt)


def gaussian_fit(features):
    x = np.asarray(features, np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("need at least two samples to fit a covariance")
    return x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False))


def _needs_jitter(s, n):
    if n <= s.shape[0]:
        return True
    vals = np.linalg.eigvalsh(s)
    return vals.min() <= 0 or vals.max() / vals.min() > ILL_CONDITIONED


def fid(features_a, features_b):
    mu1, s1 = gaussian_fit(features_a)
    mu2, s2 = gaussian_fit(features_b)
    if mu1.shape != mu2.shape:
        raise ValueError("feature dimensions differ")
    na, nb = len(features_a), len(features_b)
    if _needs_jitter(s1, na) or _needs_jitter(s2, nb):
        eye = np.eye(s1.shape[0]) * JITTER
        s1, s2 = s1 + eye, s2 + eye
    return frechet_distance(mu1, s1, mu2, s2)
