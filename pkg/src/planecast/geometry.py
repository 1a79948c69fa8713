"""Pinhole camera models, rigid transforms, plane homographies and depth sampling.

Conventions used throughout the package:

- Pixel coordinates are (x, y) with x along image columns and y along rows;
  integer coordinates land on pixel centers.
- Camera frames are right-handed with +z the viewing direction (points in
  front of the camera have z > 0).
- Extrinsics are stored world-to-camera: ``p_cam = R @ p_world + t``.
- All geometry runs in float64; image payloads elsewhere are float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateHomographyError, InvalidCameraError

ROTATION_TOL = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (np.isfinite(self.fx) and np.isfinite(self.fy)):
            raise InvalidCameraError("focal lengths must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidCameraError(
                f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}"
            )
        if self.width < 1 or self.height < 1:
            raise InvalidCameraError(
                f"image size must be at least 1x1, got {self.width}x{self.height}"
            )

    def matrix(self) -> np.ndarray:
        """3x3 calibration matrix K."""
        return np.array(
            [
                [self.fx, 0.0, self.cx],
                [0.0, self.fy, self.cy],
                [0.0, 0.0, 1.0],
            ],
            dtype=np.float64,
        )

    def inverse_matrix(self) -> np.ndarray:
        """Closed-form K^-1 (exact, no linear solve)."""
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ],
            dtype=np.float64,
        )

    @classmethod
    def from_matrix(cls, k: np.ndarray, width: int, height: int) -> "Intrinsics":
        k = np.asarray(k, dtype=np.float64)
        if k.shape != (3, 3):
            raise InvalidCameraError(f"intrinsic matrix must be 3x3, got {k.shape}")
        return cls(
            fx=float(k[0, 0]),
            fy=float(k[1, 1]),
            cx=float(k[0, 2]),
            cy=float(k[1, 2]),
            width=int(width),
            height=int(height),
        )


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation acting as ``p_out = R @ p_in + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise InvalidCameraError(f"rotation must be 3x3, got {r.shape}")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        err = np.abs(r @ r.T - np.eye(3)).max()
        if err > ROTATION_TOL or abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            raise InvalidCameraError(
                f"rotation is not orthonormal with det +1 (deviation {err:.2e})"
            )

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: returns the transform p -> self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def matrix4(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix4(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise InvalidCameraError(f"extrinsic matrix must be 4x4, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])


@dataclass(frozen=True)
class Camera:
    """A posed pinhole camera with a usable depth range in scene units."""

    intrinsics: Intrinsics
    world_to_camera: RigidTransform
    depth_range: tuple[float, float]

    def __post_init__(self):
        z_near, z_far = self.depth_range
        if not (0 < z_near < z_far):
            raise InvalidCameraError(
                f"depth range must satisfy 0 < z_near < z_far, got ({z_near}, {z_far})"
            )
        object.__setattr__(self, "depth_range", (float(z_near), float(z_far)))

    @property
    def z_near(self) -> float:
        return self.depth_range[0]

    @property
    def z_far(self) -> float:
        return self.depth_range[1]


@dataclass(frozen=True)
class DepthSampling:
    """A strictly increasing (near-to-far) list of plane depths."""

    depths: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.asarray(self.depths, dtype=np.float64).reshape(-1)
        if d.size < 1:
            raise ValueError("depth sampling needs at least one plane")
        if not np.all(d > 0):
            raise ValueError("plane depths must be positive")
        if d.size > 1 and not np.all(np.diff(d) > 0):
            raise ValueError("plane depths must be strictly increasing")
        object.__setattr__(self, "depths", d)

    @property
    def count(self) -> int:
        return int(self.depths.size)


def backproject(pixel, depth: float, intrinsics: Intrinsics) -> np.ndarray:
    """Lift a pixel at the given depth to camera coordinates: z * K^-1 [x,y,1]."""
    if depth <= 0:
        raise ValueError(f"depth must be positive, got {depth}")
    x, y = float(pixel[0]), float(pixel[1])
    return np.array(
        [
            depth * (x - intrinsics.cx) / intrinsics.fx,
            depth * (y - intrinsics.cy) / intrinsics.fy,
            depth,
        ]
    )


def project(point, intrinsics: Intrinsics) -> np.ndarray:
    """Perspective-project a camera-frame point to pixel coordinates."""
    p = np.asarray(point, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise ValueError("cannot project points at or behind the camera plane")
    return np.stack(
        [
            intrinsics.fx * p[..., 0] / z + intrinsics.cx,
            intrinsics.fy * p[..., 1] / z + intrinsics.cy,
        ],
        axis=-1,
    )


def relative_transform(reference: Camera, target: Camera) -> RigidTransform:
    """Transform mapping target-camera coordinates to reference-camera coordinates."""
    return reference.world_to_camera.compose(target.world_to_camera.inverse())


def plane_homography(
    reference: Camera,
    target: Camera,
    rel: RigidTransform,
    plane_depth: float,
) -> np.ndarray:
    """Homography sending target homogeneous pixels to reference pixels for the
    plane at depth ``plane_depth`` along the target optical axis.

    Equivalent to backprojecting the target pixel at that depth, applying
    ``rel`` and projecting into the reference camera:
    H = K_ref (R + t n^T / z) K_tgt^-1 with n = [0, 0, 1].
    """
    if plane_depth <= 0:
        raise ValueError(f"plane depth must be positive, got {plane_depth}")
    m = rel.rotation.copy()
    m[:, 2] += rel.translation / plane_depth
    h = reference.intrinsics.matrix() @ m @ target.intrinsics.inverse_matrix()
    # det(K_ref)*det(K_tgt^-1) factors out; test the plane-induced part alone.
    if abs(np.linalg.det(m)) < 1e-12:
        raise DegenerateHomographyError(
            f"plane at depth {plane_depth} induces a singular homography"
        )
    return h


def sample_inverse_depths(z_near: float, z_far: float, count: int) -> DepthSampling:
    """Place ``count`` plane depths so their reciprocals are evenly spaced.

    The i-th reciprocal (i = 1..D) is 1/z_far + (i-1)/D * (1/z_near - 1/z_far);
    the result is stored near-to-far.
    """
    if count < 1:
        raise ValueError(f"plane count must be at least 1, got {count}")
    if not (0 < z_near < z_far):
        raise ValueError(
            f"need 0 < z_near < z_far, got ({z_near}, {z_far})"
        )
    i = np.arange(count, dtype=np.float64)
    recip = 1.0 / z_far + (i / count) * (1.0 / z_near - 1.0 / z_far)
    return DepthSampling(depths=(1.0 / recip)[::-1].copy())


def ray_norms(intrinsics: Intrinsics, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Euclidean norm of K^-1 [x, y, 1] for broadcastable pixel arrays."""
    rx = (np.asarray(xs, dtype=np.float64) - intrinsics.cx) / intrinsics.fx
    ry = (np.asarray(ys, dtype=np.float64) - intrinsics.cy) / intrinsics.fy
    return np.sqrt(rx * rx + ry * ry + 1.0)


def depth_gaps(sampling: DepthSampling, single_plane_gap: float = 1.0) -> np.ndarray:
    """Per-plane depth gap to the next plane; the last gap repeats the previous
    one so every plane keeps a positive extent. A lone plane uses
    ``single_plane_gap``."""
    d = sampling.depths
    if d.size == 1:
        return np.array([float(single_plane_gap)])
    gaps = np.empty_like(d)
    gaps[:-1] = np.diff(d)
    gaps[-1] = gaps[-2]
    return gaps


def plane_spacing(
    pixel,
    sampling: DepthSampling,
    intrinsics: Intrinsics,
    single_plane_gap: float = 1.0,
) -> np.ndarray:
    """Euclidean distance between consecutive plane intersections along the
    ray through ``pixel``: (z_{i+1} - z_i) * ||K^-1 [x, y, 1]||."""
    norm = float(ray_norms(intrinsics, pixel[0], pixel[1]))
    return depth_gaps(sampling, single_plane_gap) * norm


def spacing_grid(
    sampling: DepthSampling,
    intrinsics: Intrinsics,
    single_plane_gap: float = 1.0,
) -> np.ndarray:
    """plane_spacing evaluated at every pixel of the image: (D, H, W) float64."""
    xs = np.arange(intrinsics.width, dtype=np.float64)
    ys = np.arange(intrinsics.height, dtype=np.float64)
    norms = ray_norms(intrinsics, xs[None, :], ys[:, None])
    gaps = depth_gaps(sampling, single_plane_gap)
    return gaps[:, None, None] * norms[None, :, :]
