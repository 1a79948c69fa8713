"""Pure-numpy implementations of the hot rendering kernels.

Reference semantics for both backends. Positions are computed in float64;
fractional coordinates within ``snap_tol`` of an integer are snapped so that
an identity warp reproduces the source planes bit-for-bit.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _plane_coords(h: np.ndarray, out_h: int, out_w: int, snap_tol: float):
    """Map every target pixel through a 3x3 homography.

    Returns (u, v, in_front): float64 source coordinates and a mask of pixels
    whose mapped point lies in front of the source camera.
    """
    xs = np.arange(out_w, dtype=np.float64)
    ys = np.arange(out_h, dtype=np.float64)
    x, y = np.meshgrid(xs, ys)
    denom = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    in_front = denom > 1e-12
    safe = np.where(in_front, denom, 1.0)
    u = (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / safe
    v = (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / safe
    ur = np.rint(u)
    vr = np.rint(v)
    u = np.where(np.abs(u - ur) < snap_tol, ur, u)
    v = np.where(np.abs(v - vr) < snap_tol, vr, v)
    return u, v, in_front


def warp_planes(planes: np.ndarray, hmats: np.ndarray, out_h: int, out_w: int,
                snap_tol: float = 1e-8):
    """Resample each plane of a (D, H, W, 4) stack into a target grid.

    ``hmats[i]`` maps target homogeneous pixels to source pixels of plane i.
    Out-of-bounds or behind-camera samples are invalid and zero-filled.
    """
    depth_count, src_h, src_w, channels = planes.shape
    warped = np.zeros((depth_count, out_h, out_w, channels), dtype=planes.dtype)
    valid = np.zeros((depth_count, out_h, out_w), dtype=bool)
    for i in range(depth_count):
        u, v, in_front = _plane_coords(hmats[i], out_h, out_w, snap_tol)
        ok = in_front & (u >= 0.0) & (u <= src_w - 1.0) & (v >= 0.0) & (v <= src_h - 1.0)
        uu = np.where(ok, u, 0.0)
        vv = np.where(ok, v, 0.0)
        x0 = np.floor(uu).astype(np.int64)
        y0 = np.floor(vv).astype(np.int64)
        x1 = np.minimum(x0 + 1, src_w - 1)
        y1 = np.minimum(y0 + 1, src_h - 1)
        fx = (uu - x0)[..., None]
        fy = (vv - y0)[..., None]
        p = planes[i].astype(np.float64, copy=False)
        top = (1.0 - fx) * p[y0, x0] + fx * p[y0, x1]
        bot = (1.0 - fx) * p[y1, x0] + fx * p[y1, x1]
        sample = (1.0 - fy) * top + fy * bot
        sample[~ok] = 0.0
        warped[i] = sample.astype(planes.dtype, copy=False)
        valid[i] = ok
    return warped, valid


def warp_planes_backward(grad_warped: np.ndarray, valid: np.ndarray,
                         hmats: np.ndarray, src_h: int, src_w: int,
                         snap_tol: float = 1e-8) -> np.ndarray:
    """Adjoint of warp_planes w.r.t. the source planes (bilinear scatter)."""
    depth_count, out_h, out_w, channels = grad_warped.shape
    grad_planes = np.zeros((depth_count, src_h, src_w, channels), dtype=np.float64)
    for i in range(depth_count):
        u, v, _ = _plane_coords(hmats[i], out_h, out_w, snap_tol)
        ok = valid[i]
        if not ok.any():
            continue
        uu = u[ok]
        vv = v[ok]
        g = grad_warped[i][ok].astype(np.float64, copy=False)
        x0 = np.floor(uu).astype(np.int64)
        y0 = np.floor(vv).astype(np.int64)
        x1 = np.minimum(x0 + 1, src_w - 1)
        y1 = np.minimum(y0 + 1, src_h - 1)
        fx = (uu - x0)[:, None]
        fy = (vv - y0)[:, None]
        flat = grad_planes[i].reshape(-1, channels)
        np.add.at(flat, y0 * src_w + x0, (1.0 - fx) * (1.0 - fy) * g)
        np.add.at(flat, y0 * src_w + x1, fx * (1.0 - fy) * g)
        np.add.at(flat, y1 * src_w + x0, (1.0 - fx) * fy * g)
        np.add.at(flat, y1 * src_w + x1, fx * fy * g)
    return grad_planes


def composite(warped: np.ndarray, deltas: np.ndarray, depths: np.ndarray):
    """Front-to-back over-compositing of a warped (D, H, W, 4) stack.

    Returns float64 (color, depth, opacity) where per pixel
    color = sum_i T_i (1 - exp(-sigma_i delta_i)) C_i with
    T_i = exp(-sum_{j<i} sigma_j delta_j), and depth/opacity use the same
    weights against the plane depths and 1.
    """
    sig = warped[..., 3].astype(np.float64, copy=False)
    sd = sig * deltas
    acc = np.cumsum(sd, axis=0)
    trans = np.exp(-(acc - sd))
    alpha = -np.expm1(-sd)
    w = trans * alpha
    color = np.einsum("dhw,dhwc->hwc", w, warped[..., :3].astype(np.float64, copy=False))
    depth = np.einsum("dhw,d->hw", w, np.asarray(depths, dtype=np.float64))
    opacity = w.sum(axis=0)
    return color, depth, opacity


def composite_backward(warped: np.ndarray, valid: np.ndarray, deltas: np.ndarray,
                       depths: np.ndarray, grad_color: np.ndarray) -> np.ndarray:
    """Gradient of the composited color w.r.t. the warped stack.

    Invalid samples were zero-filled constants, so their gradient is zero.
    """
    colors = warped[..., :3].astype(np.float64, copy=False)
    sig = warped[..., 3].astype(np.float64, copy=False)
    sd = sig * deltas
    acc = np.cumsum(sd, axis=0)
    trans = np.exp(-(acc - sd))
    att = np.exp(-sd)
    alpha = -np.expm1(-sd)
    w = trans * alpha

    g = grad_color.astype(np.float64, copy=False)
    gdotc = np.einsum("hwc,dhwc->dhw", g, colors)
    wg = w * gdotc
    suffix = np.cumsum(wg[::-1], axis=0)[::-1] - wg

    grad = np.zeros(warped.shape, dtype=np.float64)
    grad[..., :3] = w[..., None] * g[None, ...]
    # d w_i / d sigma_i = T_i delta_i exp(-sd_i); d w_k / d sigma_i = -delta_i w_k (k > i)
    grad[..., 3] = deltas * (trans * att * gdotc - suffix)
    grad[~valid] = 0.0
    return grad
