"""Rubber-sheet unwrapping of the iris annulus into a polar raster."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask
from .imaging import read_mask, read_pgm, write_mask, write_pgm
from .segmentation import SegmentationResult, annulus_mask

MIN_COVERAGE = 0.05


@dataclass
class NormalizedIris:
    """Polar iris raster.

    Row 0 lies on the pupil boundary and the last row on the iris boundary;
    column ``j`` samples the angle ``2*pi*j/cols`` measured from +x (image
    y axis points down).
    """

    pixels: np.ndarray
    mask: np.ndarray

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def cols(self) -> int:
        return self.pixels.shape[1]


def sample_grid(seg: SegmentationResult, rows: int, cols: int):
    """Source coordinates ``(x, y)`` for every polar sample, each ``(rows, cols)``."""
    theta = 2 * np.pi * np.arange(cols) / cols
    t = np.arange(rows) / (rows - 1) if rows > 1 else np.zeros(1)
    p, q = seg.pupil, seg.iris
    px = p.cx + p.r * np.cos(theta)
    py = p.cy + p.r * np.sin(theta)
    ix = q.cx + q.r * np.cos(theta)
    iy = q.cy + q.r * np.sin(theta)
    x = (1 - t)[:, None] * px[None, :] + t[:, None] * ix[None, :]
    y = (1 - t)[:, None] * py[None, :] + t[:, None] * iy[None, :]
    return x, y


def normalize(img, seg: SegmentationResult, rows: int = 64, cols: int = 512) -> NormalizedIris:
    img = np.asarray(img)
    h, w = img.shape
    annulus = annulus_mask(img.shape, seg.pupil, seg.iris)
    area = annulus.sum()
    if area == 0 or (seg.mask & annulus).sum() < MIN_COVERAGE * area:
        raise EmptyMask("mask covers less than 5% of the iris annulus", stage="normalization")

    x, y = sample_grid(seg, rows, cols)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    inside = (x0 >= 0) & (y0 >= 0) & (x0 + 1 < w) & (y0 + 1 < h)
    xa = np.clip(x0, 0, w - 2)
    ya = np.clip(y0, 0, h - 2)
    fx = x - xa
    fy = y - ya
    src = img.astype(np.float64)
    top = src[ya, xa] * (1 - fx) + src[ya, xa + 1] * fx
    bottom = src[ya + 1, xa] * (1 - fx) + src[ya + 1, xa + 1] * fx
    pixels = top * (1 - fy) + bottom * fy

    m = seg.mask
    valid = inside & m[ya, xa] & m[ya, xa + 1] & m[ya + 1, xa] & m[ya + 1, xa + 1]
    pixels = np.where(inside, pixels, 0.0)
    return NormalizedIris(pixels=pixels, mask=valid)


def save_normalized(norm: NormalizedIris, basename) -> tuple:
    """Write ``<basename>_norm.pgm`` and ``<basename>_normmask.pgm``."""
    tex_path = f"{basename}_norm.pgm"
    mask_path = f"{basename}_normmask.pgm"
    write_pgm(np.clip(np.rint(norm.pixels), 0, 255).astype(np.uint8), tex_path)
    write_mask(norm.mask, mask_path)
    return tex_path, mask_path


def load_normalized(basename) -> NormalizedIris:
    pixels = read_pgm(f"{basename}_norm.pgm").astype(np.float64)
    mask = read_mask(f"{basename}_normmask.pgm")
    return NormalizedIris(pixels=pixels, mask=mask)
