"""Command-line interface wiring scenes, optimization, rendering and reports.

Subcommands: synth, optimize, render, render-path, depth, eval. Option
precedence is flags > config file > defaults; config files (and the run
manifests written next to outputs) are plain ``key = value`` lines, so a
manifest can be replayed with ``--config``.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, kernels
from .errors import PlanecastError
from .losses import LossWeights
from .metrics import evaluate
from .mpi import render_novel_view
from .optimize import OptimizeConfig, optimize_scene, write_loss_log
from .sceneio import (
    load_mpi,
    load_scene,
    parse_camera_file,
    parse_camera_path_file,
    save_depth_png,
    save_image,
    save_mpi,
    write_scene,
)
from .synth import make_scene


class UsageError(Exception):
    pass


_OPTION_TYPES = {
    "seed": int,
    "depth_count": int,
    "iterations": int,
    "learning_rate": float,
    "mode": str,
    "w_l1": float,
    "w_ssim": float,
    "tv": float,
    "freq_count": int,
    "reference": int,
    "init_color": str,
    "init_sigma": float,
    "init_sigma_bg": float,
    "width": int,
    "height": int,
    "planes": int,
    "views": int,
    "train_views": int,
    "threads": int,
    "deterministic": lambda s: s.strip().lower() in ("1", "true", "yes"),
    "scene": str,
}


def _read_config_file(path: Path) -> dict:
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    values = {}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}: line {line_no}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _OPTION_TYPES:
            raise UsageError(f"{path}: line {line_no}: unknown option '{key}'")
        try:
            values[key] = _OPTION_TYPES[key](raw.strip())
        except ValueError:
            raise UsageError(
                f"{path}: line {line_no}: bad value for '{key}': {raw.strip()!r}"
            ) from None
    return values


class Settings:
    """Merged view of flags, config file and defaults."""

    def __init__(self, args):
        self.args = args
        self.file = {}
        if getattr(args, "config", None):
            self.file = _read_config_file(Path(args.config))
        self.effective = {}

    def get(self, key, default):
        flag = getattr(self.args, key, None)
        if flag is not None:
            value = flag
        elif key in self.file:
            value = self.file[key]
        else:
            value = default
        self.effective[key] = value
        return value


def _write_manifest(path: Path, subcommand: str, settings: Settings) -> None:
    lines = [
        f"# planecast {__version__} ({kernels.backend_name} kernels)",
        f"# subcommand: {subcommand}",
    ]
    for key, value in sorted(settings.effective.items()):
        lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n")


def _require_dir(path_str: str, what: str) -> Path:
    if path_str is None:
        raise UsageError(f"missing required --{what}")
    return Path(path_str)


def _require_file(path_str: str, what: str) -> Path:
    if path_str is None:
        raise UsageError(f"missing required --{what}")
    path = Path(path_str)
    if not path.is_file():
        raise UsageError(f"--{what}: no such file: {path}")
    return path


def _apply_threads(settings: Settings) -> None:
    threads = settings.get("threads", 0)
    if threads and kernels.backend_name == "numba":
        import numba

        numba.set_num_threads(threads)


def cmd_synth(args) -> int:
    settings = Settings(args)
    out = _require_dir(args.out, "out")
    seed = settings.get("seed", 0)
    width = settings.get("width", 64)
    height = settings.get("height", 64)
    planes = settings.get("planes", 3)
    views = settings.get("views", 8)
    train_views = settings.get("train_views", 0) or None
    settings.get("deterministic", False)
    scene = make_scene(seed, width=width, height=height, plane_count=planes,
                       view_count=views, train_count=train_views)
    write_scene(out, scene.cameras, scene.images, scene.train_indices,
                scene.test_indices, force=args.force)
    save_mpi(scene.mpi, out / "gt.impi")
    _write_manifest(out / "manifest.txt", "synth", settings)
    print(f"wrote scene with {views} views to {out}")
    return 0


def _split_scene_views(scene):
    train = [(v.camera, v.image) for v in scene.views if v.split == "train"]
    if not train:
        raise UsageError(f"scene {scene.root} has no training views")
    return train


def cmd_optimize(args) -> int:
    settings = Settings(args)
    scene_path = Path(settings.get("scene", None) or "")
    if not scene_path.name:
        raise UsageError("missing required --scene")
    if not scene_path.is_dir():
        raise UsageError(f"--scene: no such directory: {scene_path}")
    out = _require_dir(args.out, "out")
    out.mkdir(parents=True, exist_ok=True)
    _apply_threads(settings)
    weights = LossWeights(
        beta_l1=settings.get("w_l1", 2.0),
        beta_ssim=settings.get("w_ssim", 1.0),
        tv=settings.get("tv", 1e-4),
    )
    config = OptimizeConfig(
        depth_count=settings.get("depth_count", 32),
        iterations=settings.get("iterations", 500),
        learning_rate=settings.get("learning_rate", 1e-3),
        mode=settings.get("mode", "direct"),
        weights=weights,
        freq_count=settings.get("freq_count", 5),
        seed=settings.get("seed", 0),
        reference_index=settings.get("reference", 0),
        init_color=settings.get("init_color", "reference"),
        init_sigma_pre=settings.get("init_sigma", -1.5),
        init_sigma_bg_pre=settings.get("init_sigma_bg", 2.0),
    )
    settings.get("deterministic", False)
    scene = load_scene(scene_path)
    train = _split_scene_views(scene)
    mpi, log_rows = optimize_scene(train, config)
    save_mpi(mpi, out / "model.impi")
    write_loss_log(out / "loss_log.csv", log_rows)
    _write_manifest(out / "manifest.txt", "optimize", settings)
    final = log_rows[-1]["total_loss"] if log_rows else float("nan")
    print(f"optimized {len(train)} views for {config.iterations} iterations "
          f"(final loss {final:.6f}); wrote {out / 'model.impi'}")
    return 0


def _render_one(mpi, camera, out_png: Path, want_color: bool, want_depth: bool):
    result = render_novel_view(mpi, camera)
    if want_color:
        save_image(out_png, result.color)
    if want_depth:
        depth_path = out_png if not want_color else out_png.with_name(
            out_png.stem + "_depth.png")
        save_depth_png(depth_path, result.depth, camera.z_near, camera.z_far)


def cmd_render(args, depth_only: bool = False) -> int:
    settings = Settings(args)
    mpi_path = _require_file(args.mpi, "mpi")
    cam_path = _require_file(args.camera, "camera")
    out = _require_dir(args.out, "out")
    _apply_threads(settings)
    mpi = load_mpi(mpi_path)
    camera = parse_camera_file(cam_path, mpi.width, mpi.height)
    want_depth = depth_only or getattr(args, "depth", False)
    _render_one(mpi, camera, out, not depth_only, want_depth)
    print(f"rendered {out}")
    return 0


def cmd_render_path(args) -> int:
    settings = Settings(args)
    mpi_path = _require_file(args.mpi, "mpi")
    cams_path = _require_file(args.cameras, "cameras")
    out = _require_dir(args.out, "out")
    out.mkdir(parents=True, exist_ok=True)
    _apply_threads(settings)
    mpi = load_mpi(mpi_path)
    cameras = parse_camera_path_file(cams_path, mpi.width, mpi.height)
    for i, camera in enumerate(cameras):
        _render_one(mpi, camera, out / f"frame_{i:03d}.png", True, args.depth)
    print(f"rendered {len(cameras)} frames to {out}")
    return 0


def cmd_eval(args) -> int:
    settings = Settings(args)
    scene_path = Path(settings.get("scene", None) or "")
    if not scene_path.name:
        raise UsageError("missing required --scene")
    if not scene_path.is_dir():
        raise UsageError(f"--scene: no such directory: {scene_path}")
    mpi_path = _require_file(args.mpi, "mpi")
    out = _require_dir(args.out, "out")
    _apply_threads(settings)
    mpi = load_mpi(mpi_path)
    scene = load_scene(scene_path)
    report = evaluate(mpi, scene.eval_tuples())
    report.write_csv(out)
    for split in report.splits():
        mean_psnr, mean_ssim = report.mean(split)
        print(f"{split}: mean psnr {mean_psnr:.2f} dB, mean ssim {mean_ssim:.4f}")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="planecast",
        description="Layered-scene reconstruction and novel-view rendering",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--threads", type=int, help="cap kernel worker threads")
        p.add_argument("--deterministic", action="store_const", const=True,
                       default=None, help="pin the run for bit-exact replay")

    p_synth = sub.add_parser("synth", help="write a synthetic scene directory")
    common(p_synth)
    p_synth.add_argument("--out", required=True, help="scene directory to create")
    p_synth.add_argument("--seed", type=int)
    p_synth.add_argument("--width", type=int)
    p_synth.add_argument("--height", type=int)
    p_synth.add_argument("--planes", type=int)
    p_synth.add_argument("--views", type=int)
    p_synth.add_argument("--train-views", dest="train_views", type=int)
    p_synth.add_argument("--force", action="store_true",
                         help="overwrite an existing directory")
    p_synth.set_defaults(func=cmd_synth)

    p_opt = sub.add_parser("optimize", help="fit a plane stack to a scene")
    common(p_opt)
    p_opt.add_argument("--scene", help="scene directory")
    p_opt.add_argument("--out", required=True, help="output directory")
    p_opt.add_argument("-D", "--depth-count", dest="depth_count", type=int)
    p_opt.add_argument("--iters", dest="iterations", type=int)
    p_opt.add_argument("--lr", dest="learning_rate", type=float)
    p_opt.add_argument("--mode", choices=("direct", "implicit"))
    p_opt.add_argument("--w-l1", dest="w_l1", type=float)
    p_opt.add_argument("--w-ssim", dest="w_ssim", type=float)
    p_opt.add_argument("--tv", type=float)
    p_opt.add_argument("--freq-count", dest="freq_count", type=int)
    p_opt.add_argument("--seed", type=int)
    p_opt.add_argument("--reference", type=int,
                       help="index of the reference view within the train split")
    p_opt.add_argument("--init-color", dest="init_color",
                       choices=("reference", "gray"))
    p_opt.add_argument("--init-sigma", dest="init_sigma", type=float)
    p_opt.add_argument("--init-sigma-bg", dest="init_sigma_bg", type=float)
    p_opt.set_defaults(func=cmd_optimize)

    p_render = sub.add_parser("render", help="render a novel view from a stack file")
    common(p_render)
    p_render.add_argument("--mpi", help="input .impi file")
    p_render.add_argument("--camera", help="camera text file")
    p_render.add_argument("--out", required=True, help="output PNG path")
    p_render.add_argument("--depth", action="store_true",
                          help="also write a 16-bit depth PNG + sidecar")
    p_render.set_defaults(func=cmd_render)

    p_path = sub.add_parser("render-path",
                            help="render every camera block in a file")
    common(p_path)
    p_path.add_argument("--mpi", help="input .impi file")
    p_path.add_argument("--cameras", help="file of concatenated camera blocks")
    p_path.add_argument("--out", required=True, help="output directory")
    p_path.add_argument("--depth", action="store_true")
    p_path.set_defaults(func=cmd_render_path)

    p_depth = sub.add_parser("depth", help="render only the depth map")
    common(p_depth)
    p_depth.add_argument("--mpi", help="input .impi file")
    p_depth.add_argument("--camera", help="camera text file")
    p_depth.add_argument("--out", required=True, help="output PNG path")
    p_depth.set_defaults(func=lambda a: cmd_render(a, depth_only=True))

    p_eval = sub.add_parser("eval", help="score a stack against a scene")
    common(p_eval)
    p_eval.add_argument("--scene", help="scene directory")
    p_eval.add_argument("--mpi", help="input .impi file")
    p_eval.add_argument("--out", required=True, help="report CSV path")
    p_eval.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except PlanecastError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
