"""Numba-compiled rendering kernels.

Same contracts as numpy_backend; scalar loops compiled with @njit. Parallel
loops only ever write to disjoint output slices (rows for the gather and
compositing kernels, whole planes for the scatter), so results are
deterministic regardless of thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

NAME = "numba"


@njit(cache=True, parallel=True)
def _warp_kernel(planes, hmats, warped, valid, snap_tol):
    depth_count, src_h, src_w, channels = planes.shape
    out_h = warped.shape[1]
    out_w = warped.shape[2]
    for job in prange(depth_count * out_h):
        i = job // out_h
        y = job % out_h
        h = hmats[i]
        for x in range(out_w):
            denom = h[2, 0] * x + h[2, 1] * y + h[2, 2]
            if denom <= 1e-12:
                continue
            u = (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / denom
            v = (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / denom
            ur = np.rint(u)
            vr = np.rint(v)
            if abs(u - ur) < snap_tol:
                u = ur
            if abs(v - vr) < snap_tol:
                v = vr
            if u < 0.0 or u > src_w - 1.0 or v < 0.0 or v > src_h - 1.0:
                continue
            x0 = int(np.floor(u))
            y0 = int(np.floor(v))
            x1 = min(x0 + 1, src_w - 1)
            y1 = min(y0 + 1, src_h - 1)
            fx = u - x0
            fy = v - y0
            for c in range(channels):
                top = (1.0 - fx) * planes[i, y0, x0, c] + fx * planes[i, y0, x1, c]
                bot = (1.0 - fx) * planes[i, y1, x0, c] + fx * planes[i, y1, x1, c]
                warped[i, y, x, c] = (1.0 - fy) * top + fy * bot
            valid[i, y, x] = True


def warp_planes(planes, hmats, out_h, out_w, snap_tol=1e-8):
    depth_count = planes.shape[0]
    channels = planes.shape[3]
    warped = np.zeros((depth_count, out_h, out_w, channels), dtype=planes.dtype)
    valid = np.zeros((depth_count, out_h, out_w), dtype=np.bool_)
    _warp_kernel(np.ascontiguousarray(planes), np.ascontiguousarray(hmats),
                 warped, valid, snap_tol)
    return warped, valid


@njit(cache=True, parallel=True)
def _scatter_kernel(grad_warped, valid, hmats, grad_planes, snap_tol):
    depth_count, out_h, out_w, channels = grad_warped.shape
    src_h = grad_planes.shape[1]
    src_w = grad_planes.shape[2]
    # One plane per thread: scatters into a plane never cross threads.
    for i in prange(depth_count):
        h = hmats[i]
        for y in range(out_h):
            for x in range(out_w):
                if not valid[i, y, x]:
                    continue
                denom = h[2, 0] * x + h[2, 1] * y + h[2, 2]
                u = (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / denom
                v = (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / denom
                ur = np.rint(u)
                vr = np.rint(v)
                if abs(u - ur) < snap_tol:
                    u = ur
                if abs(v - vr) < snap_tol:
                    v = vr
                x0 = int(np.floor(u))
                y0 = int(np.floor(v))
                x1 = min(x0 + 1, src_w - 1)
                y1 = min(y0 + 1, src_h - 1)
                fx = u - x0
                fy = v - y0
                for c in range(channels):
                    g = grad_warped[i, y, x, c]
                    grad_planes[i, y0, x0, c] += (1.0 - fx) * (1.0 - fy) * g
                    grad_planes[i, y0, x1, c] += fx * (1.0 - fy) * g
                    grad_planes[i, y1, x0, c] += (1.0 - fx) * fy * g
                    grad_planes[i, y1, x1, c] += fx * fy * g


def warp_planes_backward(grad_warped, valid, hmats, src_h, src_w, snap_tol=1e-8):
    depth_count = grad_warped.shape[0]
    channels = grad_warped.shape[3]
    grad_planes = np.zeros((depth_count, src_h, src_w, channels), dtype=np.float64)
    _scatter_kernel(np.ascontiguousarray(grad_warped.astype(np.float64, copy=False)),
                    valid, np.ascontiguousarray(hmats), grad_planes, snap_tol)
    return grad_planes


@njit(cache=True, parallel=True)
def _composite_kernel(warped, deltas, depths, color, depth, opacity):
    depth_count = warped.shape[0]
    img_h = warped.shape[1]
    img_w = warped.shape[2]
    for y in prange(img_h):
        for x in range(img_w):
            acc = 0.0
            cr = 0.0
            cg = 0.0
            cb = 0.0
            dep = 0.0
            opa = 0.0
            for i in range(depth_count):
                sd = warped[i, y, x, 3] * deltas[i, y, x]
                trans = np.exp(-acc)
                alpha = -np.expm1(-sd)
                w = trans * alpha
                cr += w * warped[i, y, x, 0]
                cg += w * warped[i, y, x, 1]
                cb += w * warped[i, y, x, 2]
                dep += w * depths[i]
                opa += w
                acc += sd
            color[y, x, 0] = cr
            color[y, x, 1] = cg
            color[y, x, 2] = cb
            depth[y, x] = dep
            opacity[y, x] = opa


def composite(warped, deltas, depths):
    img_h = warped.shape[1]
    img_w = warped.shape[2]
    color = np.empty((img_h, img_w, 3), dtype=np.float64)
    depth = np.empty((img_h, img_w), dtype=np.float64)
    opacity = np.empty((img_h, img_w), dtype=np.float64)
    _composite_kernel(np.ascontiguousarray(warped), deltas,
                      np.asarray(depths, dtype=np.float64), color, depth, opacity)
    return color, depth, opacity


@njit(cache=True, parallel=True)
def _composite_backward_kernel(warped, valid, deltas, grad_color, grad_warped):
    depth_count = warped.shape[0]
    img_h = warped.shape[1]
    img_w = warped.shape[2]
    for y in prange(img_h):
        for x in range(img_w):
            # Suffix sum of w_k * (g . C_k) over k > i, built back to front.
            suffix = 0.0
            acc = 0.0
            for i in range(depth_count):
                acc += warped[i, y, x, 3] * deltas[i, y, x]
            gr = grad_color[y, x, 0]
            gg = grad_color[y, x, 1]
            gb = grad_color[y, x, 2]
            for i in range(depth_count - 1, -1, -1):
                sd = warped[i, y, x, 3] * deltas[i, y, x]
                acc -= sd
                trans = np.exp(-acc)
                att = np.exp(-sd)
                alpha = -np.expm1(-sd)
                w = trans * alpha
                gdotc = (gr * warped[i, y, x, 0] + gg * warped[i, y, x, 1]
                         + gb * warped[i, y, x, 2])
                if valid[i, y, x]:
                    grad_warped[i, y, x, 0] = w * gr
                    grad_warped[i, y, x, 1] = w * gg
                    grad_warped[i, y, x, 2] = w * gb
                    grad_warped[i, y, x, 3] = deltas[i, y, x] * (
                        trans * att * gdotc - suffix)
                suffix += w * gdotc


def composite_backward(warped, valid, deltas, depths, grad_color):
    grad_warped = np.zeros(warped.shape, dtype=np.float64)
    _composite_backward_kernel(
        np.ascontiguousarray(warped.astype(np.float64, copy=False)), valid, deltas,
        np.ascontiguousarray(grad_color.astype(np.float64, copy=False)), grad_warped)
    return grad_warped
