"""Layered-scene reconstruction from sparse posed images.

The package fits a stack of fronto-parallel RGB-sigma planes to posed
training images by gradient descent through a homography-warping
compositor, then renders color and depth for arbitrary nearby viewpoints.
"""

__version__ = "0.1.0"

from .geometry import (
    Camera,
    DepthSampling,
    Intrinsics,
    RigidTransform,
    backproject,
    plane_homography,
    plane_spacing,
    project,
    relative_transform,
    sample_inverse_depths,
)
from .losses import LossWeights, image_loss
from .metrics import EvalReport, evaluate, psnr, ssim
from .mpi import (
    MultiplaneImage,
    RenderOutput,
    WarpedStack,
    composite_color,
    composite_depth,
    render_novel_view,
    transmittance,
    warp_to_target,
)
from .optimize import OptimizationState, OptimizeConfig, adam_step, optimize_scene
from .params import depth_embedding
from .sceneio import load_mpi, load_scene, parse_camera, save_mpi
from .synth import SyntheticScene, brute_force_render, make_scene

__all__ = [
    "Camera",
    "DepthSampling",
    "Intrinsics",
    "RigidTransform",
    "backproject",
    "plane_homography",
    "plane_spacing",
    "project",
    "relative_transform",
    "sample_inverse_depths",
    "LossWeights",
    "image_loss",
    "EvalReport",
    "evaluate",
    "psnr",
    "ssim",
    "MultiplaneImage",
    "RenderOutput",
    "WarpedStack",
    "composite_color",
    "composite_depth",
    "render_novel_view",
    "transmittance",
    "warp_to_target",
    "OptimizationState",
    "OptimizeConfig",
    "adam_step",
    "optimize_scene",
    "depth_embedding",
    "load_mpi",
    "load_scene",
    "parse_camera",
    "save_mpi",
    "SyntheticScene",
    "brute_force_render",
    "make_scene",
    "__version__",
]
