"""Image-quality metrics and per-scene evaluation reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .losses import ssim_and_grad
from .mpi import MultiplaneImage, render_novel_view

PSNR_CAP_DB = 99.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images on [0, 1].

    Capped at 99 dB so identical images stay numeric in reports.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    mse = np.mean((x - y) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity (11x11 Gaussian window, sigma 1.5)."""
    value, _ = ssim_and_grad(a, b, want_grad=False)
    return value


@dataclass(frozen=True)
class EvalRow:
    view: str
    split: str
    psnr_db: float
    ssim: float


@dataclass(frozen=True)
class EvalReport:
    """Per-view metric rows plus arithmetic means per split."""

    rows: list

    def mean(self, split: str):
        picked = [r for r in self.rows if r.split == split]
        if not picked:
            return None
        return (
            float(np.mean([r.psnr_db for r in picked])),
            float(np.mean([r.ssim for r in picked])),
        )

    def splits(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.split not in seen:
                seen.append(r.split)
        return seen

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["view", "split", "psnr_db", "ssim"])
            for r in self.rows:
                writer.writerow([r.view, r.split, f"{r.psnr_db:.6f}", f"{r.ssim:.6f}"])
            for split in self.splits():
                mean_psnr, mean_ssim = self.mean(split)
                writer.writerow(
                    [f"mean_{split}", split, f"{mean_psnr:.6f}", f"{mean_ssim:.6f}"]
                )


def evaluate(mpi: MultiplaneImage, views: list) -> EvalReport:
    """Render every view and score it against its ground-truth image.

    ``views`` holds (view_id, split, camera, image) tuples; images are
    H x W x 3 on [0, 1].
    """
    rows = []
    for view_id, split, camera, image in views:
        out = render_novel_view(mpi, camera)
        rows.append(
            EvalRow(
                view=str(view_id),
                split=split,
                psnr_db=psnr(out.color, image),
                ssim=ssim(out.color, image),
            )
        )
    return EvalReport(rows=rows)
