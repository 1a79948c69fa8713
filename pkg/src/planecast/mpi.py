"""Layered scene representation and the plane-warping compositor.

A scene is a stack of D fronto-parallel RGB-sigma planes anchored in a
reference camera frustum. Novel views are rendered by mapping each plane
into the target frustum with its per-depth homography, bilinearly
resampling, and over-compositing front to back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateHomographyError
from .geometry import (
    Camera,
    DepthSampling,
    RigidTransform,
    plane_homography,
    relative_transform,
    spacing_grid,
)

SNAP_TOL = 1e-8


@dataclass(frozen=True)
class MultiplaneImage:
    """D planes of H x W RGB-sigma samples plus the frustum they live in.

    Channels are (r, g, b, sigma): colors in [0, 1], sigma a non-negative
    density per scene-length unit. Stored as float32.
    """

    planes: np.ndarray = field(repr=False)
    sampling: DepthSampling
    reference_camera: Camera

    def __post_init__(self):
        p = np.asarray(self.planes)
        if p.ndim != 4 or p.shape[3] != 4:
            raise ValueError(f"planes must be (D, H, W, 4), got {p.shape}")
        if p.shape[0] != self.sampling.count:
            raise ValueError(
                f"plane count {p.shape[0]} != depth sample count {self.sampling.count}"
            )
        intr = self.reference_camera.intrinsics
        if (p.shape[1], p.shape[2]) != (intr.height, intr.width):
            raise ValueError(
                f"plane size {p.shape[2]}x{p.shape[1]} does not match reference "
                f"camera {intr.width}x{intr.height}"
            )
        if not np.isfinite(p).all():
            raise ValueError("plane payload contains non-finite values")
        if p[..., :3].min() < 0.0 or p[..., :3].max() > 1.0:
            raise ValueError("color channels must lie in [0, 1]")
        if p[..., 3].min() < 0.0:
            raise ValueError("sigma channel must be non-negative")
        object.__setattr__(self, "planes", p.astype(np.float32, copy=False))

    @property
    def depth_count(self) -> int:
        return self.planes.shape[0]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]


@dataclass(frozen=True)
class WarpedStack:
    """A plane stack resampled into a target frustum, with validity mask."""

    planes: np.ndarray = field(repr=False)
    valid: np.ndarray = field(repr=False)
    sampling: DepthSampling


@dataclass(frozen=True)
class RenderOutput:
    """Composited color, depth, accumulated weight, and plane coverage."""

    color: np.ndarray = field(repr=False)
    depth: np.ndarray = field(repr=False)
    opacity: np.ndarray = field(repr=False)
    coverage: np.ndarray = field(repr=False)


def plane_homographies(reference: Camera, target: Camera,
                       sampling: DepthSampling) -> np.ndarray:
    """Per-plane target-to-reference homographies, (D, 3, 3) float64."""
    rel = relative_transform(reference, target)
    mats = np.empty((sampling.count, 3, 3))
    for i, z in enumerate(sampling.depths):
        try:
            mats[i] = plane_homography(reference, target, rel, float(z))
        except DegenerateHomographyError as err:
            raise DegenerateHomographyError(f"plane {i}: {err}") from None
    return mats


def warp_to_target(mpi: MultiplaneImage, target: Camera) -> WarpedStack:
    """Resample every plane into the target camera frustum.

    Target pixels falling outside a source plane (or behind the reference
    camera) are invalid and carry sigma = 0.
    """
    ref = mpi.reference_camera
    depths = mpi.sampling.depths
    if depths[-1] < target.z_near or depths[0] > target.z_far:
        raise ValueError(
            f"target depth range {target.depth_range} does not overlap plane "
            f"depths [{depths[0]}, {depths[-1]}]"
        )
    mats = plane_homographies(ref, target, mpi.sampling)
    warped, valid = kernels.warp_planes(
        mpi.planes, mats, target.intrinsics.height, target.intrinsics.width, SNAP_TOL
    )
    return WarpedStack(planes=warped, valid=valid, sampling=mpi.sampling)


def transmittance(sigmas: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """T_i = exp(-sum_{j<i} sigma_j delta_j) along the leading axis.

    T_1 is 1 and the sequence is non-increasing for non-negative inputs.
    """
    sd = np.asarray(sigmas, dtype=np.float64) * np.asarray(deltas, dtype=np.float64)
    acc = np.cumsum(sd, axis=0)
    return np.exp(-(acc - sd))


def composite_color(stack: WarpedStack, target: Camera,
                    single_plane_gap: float = 1.0) -> np.ndarray:
    """Over-composite a warped stack to an H x W x 3 color image."""
    deltas = spacing_grid(stack.sampling, target.intrinsics, single_plane_gap)
    color, _, _ = kernels.composite(stack.planes, deltas, stack.sampling.depths)
    return color.astype(stack.planes.dtype, copy=False)


def composite_depth(stack: WarpedStack, target: Camera,
                    sampling: DepthSampling | None = None,
                    single_plane_gap: float = 1.0) -> np.ndarray:
    """Composite per-plane depths with the same weights as the color pass.

    Where nothing accumulates (opacity 0) the depth reads 0; consult the
    opacity map before trusting values.
    """
    sampling = sampling or stack.sampling
    deltas = spacing_grid(sampling, target.intrinsics, single_plane_gap)
    _, depth, _ = kernels.composite(stack.planes, deltas, sampling.depths)
    return depth


def render_novel_view(mpi: MultiplaneImage, target: Camera,
                      single_plane_gap: float = 1.0) -> RenderOutput:
    """Warp the plane stack into the target frustum and composite it."""
    stack = warp_to_target(mpi, target)
    deltas = spacing_grid(mpi.sampling, target.intrinsics, single_plane_gap)
    color, depth, opacity = kernels.composite(
        stack.planes, deltas, mpi.sampling.depths
    )
    coverage = stack.valid.mean(axis=0)
    return RenderOutput(
        color=color.astype(np.float32),
        depth=depth,
        opacity=opacity,
        coverage=coverage,
    )


def render_planes_raw(planes: np.ndarray, sampling: DepthSampling,
                      reference: Camera, target: Camera,
                      single_plane_gap: float = 1.0):
    """Differentiable-path renderer on a raw (D, H, W, 4) array.

    Skips the MultiplaneImage value checks and keeps the input dtype
    (float64 planes composite in float64 throughout), so it can sit inside
    a gradient computation. Returns (color, depth, opacity, stack).
    """
    depths = sampling.depths
    if depths[-1] < target.z_near or depths[0] > target.z_far:
        raise ValueError(
            f"target depth range {target.depth_range} does not overlap plane "
            f"depths [{depths[0]}, {depths[-1]}]"
        )
    mats = plane_homographies(reference, target, sampling)
    warped, valid = kernels.warp_planes(
        planes, mats, target.intrinsics.height, target.intrinsics.width, SNAP_TOL
    )
    stack = WarpedStack(planes=warped, valid=valid, sampling=sampling)
    deltas = spacing_grid(sampling, target.intrinsics, single_plane_gap)
    color, depth, opacity = kernels.composite(warped, deltas, depths)
    return color, depth, opacity, stack


def render_backward(stack: WarpedStack, sampling: DepthSampling,
                    reference: Camera, target: Camera,
                    grad_color: np.ndarray,
                    single_plane_gap: float = 1.0) -> np.ndarray:
    """Gradient of the composited color w.r.t. the unwarped source planes.

    ``stack`` must be the WarpedStack produced by the forward pass for the
    same cameras. Warp positions depend only on the fixed cameras, so the
    adjoint is compositing-backward followed by a bilinear scatter.
    """
    deltas = spacing_grid(sampling, target.intrinsics, single_plane_gap)
    grad_warped = kernels.composite_backward(
        stack.planes, stack.valid, deltas, sampling.depths, grad_color
    )
    mats = plane_homographies(reference, target, sampling)
    intr = reference.intrinsics
    return kernels.warp_planes_backward(
        grad_warped, stack.valid, mats, intr.height, intr.width, SNAP_TOL
    )
