"""Synthetic layered scenes with an independent brute-force compositor.

The generator builds a ground-truth plane stack from band-limited procedural
textures (smooth color fields, soft-edged disks) and renders every view with
a per-pixel scalar compositor that shares no code with the fast renderer:
each pixel is backprojected at each plane depth, rigidly transformed and
reprojected with scalar arithmetic, and transmittance is accumulated
multiplicatively. Scene images always come from this path, so it doubles as
the anti-regression oracle for the fast renderer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Camera,
    DepthSampling,
    Intrinsics,
    RigidTransform,
    depth_gaps,
    sample_inverse_depths,
)
from .mpi import MultiplaneImage

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


@dataclass(frozen=True)
class SyntheticScene:
    """Ground-truth plane stack plus oracle-rendered posed views."""

    mpi: MultiplaneImage
    cameras: list = field(repr=False)
    images: list = field(repr=False)
    train_indices: tuple
    test_indices: tuple
    seed: int

    @property
    def view_count(self) -> int:
        return len(self.cameras)

    def train_views(self):
        return [(i, self.cameras[i], self.images[i]) for i in self.train_indices]

    def test_views(self):
        return [(i, self.cameras[i], self.images[i]) for i in self.test_indices]


@njit(cache=True)
def _oracle_loop(planes, depths, gaps, rot, trans, kt, kr, src_h, src_w,
                 color, depth, opacity, coverage, snap_tol):
    out_h = color.shape[0]
    out_w = color.shape[1]
    depth_count = planes.shape[0]
    fxt, fyt, cxt, cyt = kt[0], kt[1], kt[2], kt[3]
    fxr, fyr, cxr, cyr = kr[0], kr[1], kr[2], kr[3]
    for y in range(out_h):
        for x in range(out_w):
            rx = (x - cxt) / fxt
            ry = (y - cyt) / fyt
            norm = math.sqrt(rx * rx + ry * ry + 1.0)
            t_acc = 1.0
            cr = 0.0
            cg = 0.0
            cb = 0.0
            dep = 0.0
            opa = 0.0
            nvalid = 0
            for i in range(depth_count):
                z = depths[i]
                px = z * rx
                py = z * ry
                pz = z
                qx = rot[0, 0] * px + rot[0, 1] * py + rot[0, 2] * pz + trans[0]
                qy = rot[1, 0] * px + rot[1, 1] * py + rot[1, 2] * pz + trans[1]
                qz = rot[2, 0] * px + rot[2, 1] * py + rot[2, 2] * pz + trans[2]
                if qz <= 0.0:
                    continue
                u = fxr * qx / qz + cxr
                v = fyr * qy / qz + cyr
                ur = math.floor(u + 0.5)
                vr = math.floor(v + 0.5)
                if abs(u - ur) < snap_tol:
                    u = ur
                if abs(v - vr) < snap_tol:
                    v = vr
                if u < 0.0 or u > src_w - 1.0 or v < 0.0 or v > src_h - 1.0:
                    continue
                nvalid += 1
                x0 = int(math.floor(u))
                y0 = int(math.floor(v))
                x1 = x0 + 1 if x0 + 1 < src_w else src_w - 1
                y1 = y0 + 1 if y0 + 1 < src_h else src_h - 1
                fu = u - x0
                fv = v - y0
                w00 = (1.0 - fu) * (1.0 - fv)
                w01 = fu * (1.0 - fv)
                w10 = (1.0 - fu) * fv
                w11 = fu * fv
                sr = (w00 * planes[i, y0, x0, 0] + w01 * planes[i, y0, x1, 0]
                      + w10 * planes[i, y1, x0, 0] + w11 * planes[i, y1, x1, 0])
                sg = (w00 * planes[i, y0, x0, 1] + w01 * planes[i, y0, x1, 1]
                      + w10 * planes[i, y1, x0, 1] + w11 * planes[i, y1, x1, 1])
                sb = (w00 * planes[i, y0, x0, 2] + w01 * planes[i, y0, x1, 2]
                      + w10 * planes[i, y1, x0, 2] + w11 * planes[i, y1, x1, 2])
                ss = (w00 * planes[i, y0, x0, 3] + w01 * planes[i, y0, x1, 3]
                      + w10 * planes[i, y1, x0, 3] + w11 * planes[i, y1, x1, 3])
                a = 1.0 - math.exp(-ss * gaps[i] * norm)
                w = t_acc * a
                cr += w * sr
                cg += w * sg
                cb += w * sb
                dep += w * z
                opa += w
                t_acc = t_acc * (1.0 - a)
            color[y, x, 0] = cr
            color[y, x, 1] = cg
            color[y, x, 2] = cb
            depth[y, x] = dep
            opacity[y, x] = opa
            coverage[y, x] = nvalid / depth_count


def brute_force_render(mpi: MultiplaneImage, camera: Camera,
                       single_plane_gap: float = 1.0):
    """Reference compositor: per-pixel scalar correspondence and accumulation.

    Returns (color, depth, opacity, coverage) as float64 arrays (color is
    H x W x 3).
    """
    ref = mpi.reference_camera
    rr = ref.world_to_camera.rotation
    tr = ref.world_to_camera.translation
    rt = camera.world_to_camera.rotation
    tt = camera.world_to_camera.translation
    rot = rr @ rt.T
    trans = tr - rot @ tt
    intr_t = camera.intrinsics
    intr_r = ref.intrinsics
    out_h, out_w = intr_t.height, intr_t.width
    color = np.zeros((out_h, out_w, 3))
    depth = np.zeros((out_h, out_w))
    opacity = np.zeros((out_h, out_w))
    coverage = np.zeros((out_h, out_w))
    _oracle_loop(
        mpi.planes,
        mpi.sampling.depths,
        depth_gaps(mpi.sampling, single_plane_gap),
        rot,
        trans,
        np.array([intr_t.fx, intr_t.fy, intr_t.cx, intr_t.cy]),
        np.array([intr_r.fx, intr_r.fy, intr_r.cx, intr_r.cy]),
        intr_r.height,
        intr_r.width,
        color,
        depth,
        opacity,
        coverage,
        1e-8,
    )
    return color, depth, opacity, coverage


def _look_at(position: np.ndarray, target: np.ndarray) -> RigidTransform:
    """World-to-camera transform for a camera at ``position`` looking at
    ``target`` (camera axes: x right, y down, z forward)."""
    forward = target - position
    forward = forward / np.linalg.norm(forward)
    down_hint = np.array([0.0, 1.0, 0.0])
    right = np.cross(down_hint, forward)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    return RigidTransform(rot, -rot @ position)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _smooth_field(rng: np.random.Generator, xn: np.ndarray, yn: np.ndarray,
                  base: float = 0.5, amp: float = 0.2) -> np.ndarray:
    """Band-limited scalar field in [base-amp, base+amp]."""
    out = np.zeros_like(xn)
    for _ in range(3):
        fx = rng.uniform(0.5, 2.5)
        fy = rng.uniform(0.5, 2.5)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out += np.sin(2.0 * np.pi * (fx * xn + fy * yn) + phase)
    return base + amp * out / 3.0


def _soft_disk(xn, yn, center, radius, edge):
    r = np.sqrt((xn - center[0]) ** 2 + (yn - center[1]) ** 2)
    return _smoothstep((radius - r) / edge)


def make_scene(seed: int, width: int = 64, height: int = 64,
               plane_count: int = 3, view_count: int = 8,
               train_count: int | None = None,
               depth_range: tuple[float, float] = (10.0, 30.0)) -> SyntheticScene:
    """Build a reproducible layered scene and oracle-render all of its views.

    Planes carry smooth procedural content: an opaque textured background on
    the farthest plane and soft-edged colored disks on the nearer ones.
    Cameras sit on a small ring around the straight-down reference view, so
    perspective variation stays limited. The first ``train_count`` views
    (default ~5/8 of them) form the training split.
    """
    if plane_count < 1:
        raise ValueError("plane_count must be >= 1")
    if view_count < 2:
        raise ValueError("view_count must be >= 2")
    rng = np.random.default_rng(seed)
    z_near, z_far = depth_range
    sampling = sample_inverse_depths(z_near, z_far, plane_count)

    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    xn, yn = np.meshgrid(xs / width, ys / height)

    planes = np.zeros((plane_count, height, width, 4), dtype=np.float64)
    # Farthest plane: opaque background with smooth multi-sine color fields.
    for c in range(3):
        planes[-1, ..., c] = np.clip(
            _smooth_field(rng, xn, yn, base=0.5, amp=0.22), 0.22, 0.78
        )
    planes[-1, ..., 3] = 4.0
    # Nearer planes: a few soft disks each, opaque in their interior.
    for i in range(plane_count - 1):
        for _ in range(rng.integers(2, 4)):
            center = rng.uniform(0.25, 0.75, size=2)
            radius = rng.uniform(0.10, 0.18)
            mask = _soft_disk(xn, yn, center, radius, edge=0.06)
            color = rng.uniform(0.25, 0.75, size=3)
            stronger = mask > planes[i, ..., 3] / 4.0
            for c in range(3):
                planes[i, ..., c] = np.where(stronger, color[c], planes[i, ..., c])
            planes[i, ..., 3] = np.maximum(planes[i, ..., 3], 4.0 * mask)

    intr = Intrinsics(
        fx=1.25 * width,
        fy=1.25 * width,
        cx=(width - 1) / 2.0,
        cy=(height - 1) / 2.0,
        width=width,
        height=height,
    )
    reference = Camera(intr, RigidTransform.identity(), (z_near, z_far))
    mpi = MultiplaneImage(
        planes=planes.astype(np.float32), sampling=sampling, reference_camera=reference
    )

    center_depth = 0.5 * (z_near + z_far)
    aim = np.array([0.0, 0.0, center_depth])
    cameras = [reference]
    for k in range(view_count - 1):
        angle = 2.0 * np.pi * k / (view_count - 1)
        radius = rng.uniform(0.7, 1.1)
        position = np.array([
            radius * np.cos(angle),
            radius * np.sin(angle),
            rng.uniform(-0.3, 0.3),
        ])
        cameras.append(Camera(intr, _look_at(position, aim), (z_near, z_far)))

    images = []
    for cam in cameras:
        color, _, _, _ = brute_force_render(mpi, cam)
        images.append(color.astype(np.float32))

    if train_count is None:
        train_count = view_count - max(1, round(view_count * 3 / 8))
    if not (1 <= train_count < view_count):
        raise ValueError(f"train_count must be in [1, {view_count - 1}]")
    return SyntheticScene(
        mpi=mpi,
        cameras=cameras,
        images=images,
        train_indices=tuple(range(train_count)),
        test_indices=tuple(range(train_count, view_count)),
        seed=seed,
    )
