"""Per-scene gradient-descent reconstruction through the renderer.

The loop follows the per-view schedule: every iteration renders each
training view from the decoded plane stack, evaluates the pyramid loss
against that view's image, backpropagates through compositing, warping and
the parameter decoding, and applies one Adam update per view.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import OptimizationError
from .geometry import Camera, DepthSampling, sample_inverse_depths, spacing_grid
from .losses import LossWeights, build_pyramid, loss_on_pyramids, pyramid_backward, tv_and_grad
from .mpi import SNAP_TOL, MultiplaneImage, plane_homographies
from .params import (
    DEFAULT_FREQ_COUNT,
    DEFAULT_HIDDEN,
    DirectParameterization,
    ImplicitParameterization,
)

LOG_COLUMNS = ("iteration", "total_loss", "l1", "ssim_loss", "tv", "wall_ms")


@dataclass(frozen=True)
class OptimizeConfig:
    depth_count: int = 32
    iterations: int = 500
    learning_rate: float = 1e-3
    mode: str = "direct"
    weights: LossWeights = field(default_factory=LossWeights)
    freq_count: int = DEFAULT_FREQ_COUNT
    hidden: tuple = DEFAULT_HIDDEN
    seed: int = 0
    reference_index: int = 0
    pyramid_levels: int = 4
    init_color: str = "reference"
    init_sigma_pre: float = -1.5
    init_sigma_bg_pre: float = 2.0
    direct_gain: float = 4.0
    single_plane_gap: float = 1.0

    def __post_init__(self):
        if self.mode not in ("direct", "implicit"):
            raise ValueError(f"mode must be 'direct' or 'implicit', got {self.mode!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.init_color not in ("reference", "gray"):
            raise ValueError(f"init_color must be 'reference' or 'gray', got {self.init_color!r}")


@dataclass
class OptimizationState:
    """Parameterization plus Adam moments and step counter."""

    parameterization: object
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        params = self.parameterization.parameters()
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]


def adam_step(state: OptimizationState, grads: list) -> OptimizationState:
    """One in-place Adam update with bias correction."""
    params = state.parameterization.parameters()
    if len(grads) != len(params):
        raise ValueError(f"expected {len(params)} gradient arrays, got {len(grads)}")
    for g, p in zip(grads, params):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.isfinite(g).all():
            raise OptimizationError("non-finite gradient")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


@dataclass
class ViewContext:
    """Precomputed per-view quantities that stay fixed during optimization."""

    camera: Camera
    target_pyramid: list
    homographies: np.ndarray
    deltas: np.ndarray


def make_view_context(reference: Camera, sampling: DepthSampling, camera: Camera,
                      image: np.ndarray, levels: int,
                      single_plane_gap: float = 1.0) -> ViewContext:
    return ViewContext(
        camera=camera,
        target_pyramid=build_pyramid(image, levels),
        homographies=plane_homographies(reference, camera, sampling),
        deltas=spacing_grid(sampling, camera.intrinsics, single_plane_gap),
    )


def view_objective(param, reference: Camera, sampling: DepthSampling,
                   ctx: ViewContext, weights: LossWeights, levels: int):
    """Loss terms and parameter gradients for one training view.

    Runs decode -> warp -> composite -> pyramid loss forward, then the exact
    adjoint of each stage in reverse. The density total-variation penalty
    applies in direct mode only.
    """
    planes = param.decode()
    intr_t = ctx.camera.intrinsics
    warped, valid = kernels.warp_planes(planes, ctx.homographies,
                                        intr_t.height, intr_t.width, SNAP_TOL)
    color, _, _ = kernels.composite(warped, ctx.deltas, sampling.depths)
    rendered_pyr = build_pyramid(color, levels)
    terms, level_grads = loss_on_pyramids(rendered_pyr, ctx.target_pyramid, weights)
    grad_color = pyramid_backward(level_grads)
    grad_warped = kernels.composite_backward(warped, valid, ctx.deltas,
                                             sampling.depths, grad_color)
    intr_r = reference.intrinsics
    grad_planes = kernels.warp_planes_backward(grad_warped, valid, ctx.homographies,
                                               intr_r.height, intr_r.width, SNAP_TOL)
    tv_value = 0.0
    if weights.tv > 0.0 and param.mode == "direct":
        tv_value, tv_grad = tv_and_grad(planes[..., 3])
        grad_planes[..., 3] += weights.tv * tv_grad
    terms = dict(terms, tv=tv_value, total=terms["total"] + weights.tv * tv_value)
    return terms, param.decode_backward(grad_planes)


def init_parameterization(config: OptimizeConfig, reference_image: np.ndarray,
                          height: int, width: int):
    """Build the starting parameters.

    Direct mode can seed its colors from the reference image (the artifact's
    stand-in for a learned scene prior) and starts mostly transparent except
    for an absorbing backdrop on the farthest plane.
    """
    rng = np.random.default_rng(config.seed)
    d = config.depth_count
    if config.mode == "implicit":
        bias = (0.0, 0.0, 0.0, config.init_sigma_pre)
        return ImplicitParameterization.create(
            rng, d, height, width, freq_count=config.freq_count,
            hidden=config.hidden, output_bias=bias,
        )
    values = np.zeros((d, height, width, 4))
    if config.init_color == "reference":
        ref = np.clip(np.asarray(reference_image, dtype=np.float64), 0.02, 0.98)
        values[..., :3] = np.log(ref / (1.0 - ref))[None, ...]
    # init_sigma_* are pre-squash values; stored raw values carry 1/gain.
    values[..., 3] = config.init_sigma_pre
    values[-1, ..., 3] = config.init_sigma_bg_pre
    values /= config.direct_gain
    return DirectParameterization(values=values, gain=config.direct_gain)


def optimize_scene(views: list, config: OptimizeConfig):
    """Fit a plane stack to posed training views by gradient descent.

    ``views`` is a list of (Camera, image) pairs; the view at
    ``config.reference_index`` anchors the plane frustum. Returns the decoded
    MultiplaneImage and one loss-log row per iteration (means over views).
    """
    if not views:
        raise ValueError("need at least one training view")
    if not (0 <= config.reference_index < len(views)):
        raise ValueError(
            f"reference index {config.reference_index} out of range for "
            f"{len(views)} views"
        )
    reference, ref_image = views[config.reference_index]
    intr = reference.intrinsics
    sampling = sample_inverse_depths(reference.z_near, reference.z_far,
                                     config.depth_count)
    contexts = [
        make_view_context(reference, sampling, cam, img, config.pyramid_levels,
                          config.single_plane_gap)
        for cam, img in views
    ]
    param = init_parameterization(config, ref_image, intr.height, intr.width)
    state = OptimizationState(parameterization=param,
                              learning_rate=config.learning_rate)
    log_rows = []
    for it in range(config.iterations):
        t0 = time.perf_counter()
        sums = {"total": 0.0, "l1": 0.0, "ssim": 0.0, "tv": 0.0}
        for ctx in contexts:
            terms, grads = view_objective(param, reference, sampling, ctx,
                                          config.weights, config.pyramid_levels)
            if not np.isfinite(terms["total"]):
                raise OptimizationError(
                    f"loss became non-finite at iteration {it}"
                )
            adam_step(state, grads)
            for key in sums:
                sums[key] += terms[key]
        n = len(contexts)
        log_rows.append({
            "iteration": it,
            "total_loss": sums["total"] / n,
            "l1": sums["l1"] / n,
            "ssim_loss": sums["ssim"] / n,
            "tv": sums["tv"] / n,
            "wall_ms": (time.perf_counter() - t0) * 1e3,
        })
    planes = param.decode().astype(np.float32)
    mpi = MultiplaneImage(planes=np.clip(planes, 0.0, None), sampling=sampling,
                          reference_camera=reference)
    return mpi, log_rows


def write_loss_log(path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in LOG_COLUMNS})
