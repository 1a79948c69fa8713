"""Multi-scale image losses with exact analytic gradients.

The training objective combines a pixelwise L1 term and a structural
dissimilarity term (1 - SSIM) over a mean-pooled image pyramid, plus an
optional total-variation penalty on the density planes. Every term returns
its gradient in closed form; finite-difference tests pin them down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class LossWeights:
    """Balancing weights for the image terms.

    ``lambda_*`` are the generic L1:SSIM weights of the reusable pairwise
    loss; ``beta_*`` are the per-scene instantiation used by the optimizer.
    A perceptual-feature term is not implemented, so ``beta_lpips`` must
    stay 0. ``tv`` scales the density total-variation penalty.
    """

    lambda_l1: float = 2.0
    lambda_ssim: float = 1.0
    beta_l1: float = 2.0
    beta_ssim: float = 1.0
    beta_lpips: float = 0.0
    tv: float = 1e-4

    def __post_init__(self):
        for name in ("lambda_l1", "lambda_ssim", "beta_l1", "beta_ssim",
                     "beta_lpips", "tv"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.beta_lpips != 0.0:
            raise ValueError("beta_lpips must be 0: no perceptual loss backend")


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


_WINDOW_1D = _gaussian_window()


def _blur_valid(a: np.ndarray) -> np.ndarray:
    """Gaussian-weighted window means at fully-contained window positions."""
    r = SSIM_WINDOW // 2
    t = correlate1d(a, _WINDOW_1D, axis=0, mode="constant")
    t = correlate1d(t, _WINDOW_1D, axis=1, mode="constant")
    return t[r:-r, r:-r]


def _blur_adjoint(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Exact adjoint of _blur_valid (the window is symmetric)."""
    r = SSIM_WINDOW // 2
    full = np.zeros(shape)
    full[r:-r, r:-r] = g
    t = correlate1d(full, _WINDOW_1D, axis=0, mode="constant")
    return correlate1d(t, _WINDOW_1D, axis=1, mode="constant")


def _as_channels(img: np.ndarray) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        return a[..., None]
    if a.ndim == 3:
        return a
    raise ValueError(f"expected HxW or HxWxC image, got shape {a.shape}")


def ssim_and_grad(a: np.ndarray, b: np.ndarray, want_grad: bool = True):
    """Mean local SSIM between images in [0, 1] and d(ssim)/d(a).

    Uses an 11x11 Gaussian window (sigma 1.5), stabilizers C1 = 0.01^2 and
    C2 = 0.03^2 on unit dynamic range, fully-contained windows only, and a
    channel average.
    """
    x = _as_channels(a)
    y = _as_channels(b)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    h, w, channels = x.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(
            f"image {w}x{h} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    total = 0.0
    grad = np.zeros_like(x) if want_grad else None
    for c in range(channels):
        xc = x[..., c]
        yc = y[..., c]
        mu_x = _blur_valid(xc)
        mu_y = _blur_valid(yc)
        m2x = _blur_valid(xc * xc)
        m2y = _blur_valid(yc * yc)
        mxy = _blur_valid(xc * yc)
        a1 = 2.0 * mu_x * mu_y + SSIM_C1
        a2 = 2.0 * (mxy - mu_x * mu_y) + SSIM_C2
        b1 = mu_x * mu_x + mu_y * mu_y + SSIM_C1
        b2 = (m2x - mu_x * mu_x) + (m2y - mu_y * mu_y) + SSIM_C2
        smap = (a1 * a2) / (b1 * b2)
        total += smap.mean()
        if want_grad:
            n = smap.size
            inv = 1.0 / (b1 * b2)
            g_mu = 2.0 * mu_y * (a2 - a1) * inv - 2.0 * mu_x * smap * (1.0 / b1 - 1.0 / b2)
            g_m2 = -smap / b2
            g_mxy = 2.0 * a1 * inv
            grad[..., c] = (
                _blur_adjoint(g_mu, (h, w))
                + 2.0 * xc * _blur_adjoint(g_m2, (h, w))
                + yc * _blur_adjoint(g_mxy, (h, w))
            ) / n
    total /= channels
    if want_grad:
        grad /= channels
        if np.asarray(a).ndim == 2:
            grad = grad[..., 0]
    return total, grad


def l1_and_grad(a: np.ndarray, b: np.ndarray):
    """Mean absolute difference and its (sub)gradient w.r.t. ``a``."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    diff = x - y
    return np.abs(diff).mean(), np.sign(diff) / diff.size


def build_pyramid(img: np.ndarray, levels: int = 4,
                  min_size: int = SSIM_WINDOW) -> list[np.ndarray]:
    """Mean-pool 2x2 pyramid; stops early if a level would drop below
    ``min_size`` in either dimension or the size is odd."""
    out = [np.asarray(img, dtype=np.float64)]
    while len(out) < levels:
        cur = out[-1]
        h, w = cur.shape[:2]
        if h % 2 or w % 2 or h // 2 < min_size or w // 2 < min_size:
            break
        pooled = 0.25 * (cur[0::2, 0::2] + cur[1::2, 0::2]
                         + cur[0::2, 1::2] + cur[1::2, 1::2])
        out.append(pooled)
    return out


def pyramid_backward(level_grads: list[np.ndarray]) -> np.ndarray:
    """Exact adjoint of build_pyramid: fold level gradients back to the base."""
    acc = np.asarray(level_grads[-1], dtype=np.float64)
    for lower in level_grads[-2::-1]:
        up = np.repeat(np.repeat(acc, 2, axis=0), 2, axis=1)
        acc = lower + 0.25 * up
    return acc


def loss_on_pyramids(rendered: list[np.ndarray], target: list[np.ndarray],
                     weights: LossWeights):
    """Sum over scales of beta_l1 * L1 + beta_ssim * (1 - SSIM).

    Returns (terms, level_grads) where terms is a dict with keys
    ``total``, ``l1``, ``ssim`` and level_grads holds d(total)/d(rendered
    level) for every pyramid level.
    """
    if len(rendered) != len(target):
        raise ValueError(
            f"pyramid depths differ: {len(rendered)} vs {len(target)}"
        )
    total = 0.0
    l1_total = 0.0
    ssim_total = 0.0
    grads = []
    for ren, tgt in zip(rendered, target):
        l1, g_l1 = l1_and_grad(ren, tgt)
        ssim, g_ssim = ssim_and_grad(ren, tgt)
        l1_total += l1
        ssim_total += 1.0 - ssim
        total += weights.beta_l1 * l1 + weights.beta_ssim * (1.0 - ssim)
        grads.append(weights.beta_l1 * g_l1 - weights.beta_ssim * g_ssim)
    return {"total": total, "l1": l1_total, "ssim": ssim_total}, grads


def image_loss(rendered: np.ndarray, target: np.ndarray, weights: LossWeights,
               levels: int = 4):
    """Pyramid loss between two base-resolution images.

    Returns (terms, grad) with the gradient folded back to the rendered
    base image.
    """
    rp = build_pyramid(rendered, levels)
    tp = build_pyramid(target, levels)
    terms, grads = loss_on_pyramids(rp, tp, weights)
    return terms, pyramid_backward(grads)


def tv_and_grad(planes: np.ndarray):
    """Mean absolute difference between neighboring samples of each plane.

    ``planes`` is (D, H, W); returns (value, gradient).
    """
    p = np.asarray(planes, dtype=np.float64)
    dx = p[:, :, 1:] - p[:, :, :-1]
    dy = p[:, 1:, :] - p[:, :-1, :]
    count = dx.size + dy.size
    if count == 0:
        return 0.0, np.zeros_like(p)
    value = (np.abs(dx).sum() + np.abs(dy).sum()) / count
    grad = np.zeros_like(p)
    sx = np.sign(dx) / count
    sy = np.sign(dy) / count
    grad[:, :, 1:] += sx
    grad[:, :, :-1] -= sx
    grad[:, 1:, :] += sy
    grad[:, :-1, :] -= sy
    return value, grad
