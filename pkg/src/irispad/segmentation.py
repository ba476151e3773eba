"""Circular pupil/iris localization and external mask ingestion.

The built-in segmenter is an integro-differential circle search: for every
candidate center the mean intensity along concentric circles is sampled, its
radial derivative is smoothed with a Gaussian, and the strongest outward
dark-to-bright step wins.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import DimensionMismatch, InvalidCircles, NoBoundaryFound, SearchRangeInvalid
from .imaging import read_mask


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def contains(self, other: "Circle") -> bool:
        """True when ``other`` lies strictly inside this circle."""
        return math.hypot(self.cx - other.cx, self.cy - other.cy) + other.r < self.r


@dataclass
class SegmentationResult:
    pupil: Circle
    iris: Circle
    mask: np.ndarray

    def __post_init__(self):
        check_circles(self.pupil, self.iris, self.mask.shape)


def check_circles(pupil: Circle, iris: Circle, shape=None) -> None:
    for c in (pupil, iris):
        if not c.r > 0:
            raise InvalidCircles(f"non-positive radius in {c}")
        if shape is not None:
            h, w = shape
            if not (0 <= c.cx <= w - 1 and 0 <= c.cy <= h - 1):
                raise InvalidCircles(f"center of {c} outside the {w}x{h} image")
    if not iris.contains(pupil):
        raise InvalidCircles(f"pupil {pupil} is not strictly inside iris {iris}")


def annulus_mask(shape, pupil: Circle, iris: Circle) -> np.ndarray:
    """Pixels inside the iris circle and outside the pupil circle."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    d_iris = np.hypot(xx - iris.cx, yy - iris.cy)
    d_pupil = np.hypot(xx - pupil.cx, yy - pupil.cy)
    return (d_iris <= iris.r) & (d_pupil > pupil.r)


@dataclass
class SegmentConfig:
    """Search ranges for the circle fit.

    ``center_box`` is ``(x_min, x_max, y_min, y_max)`` for the pupil center;
    ``None`` means the central half of the image in each dimension.
    """

    pupil_radius: tuple = (20, 70)
    iris_radius: tuple = (80, 160)
    center_box: tuple | None = None
    iris_center_offset: int = 10
    coarse_stride: int = 4
    refine_halfwidth: int = 4
    blur_sigma: float = 2.0
    n_angles: int = 64
    specular_threshold: int = 250
    contrast_floor: float = 2.0
    iris_sectors: tuple = field(default=((-45.0, 45.0), (135.0, 225.0)))

    def resolved_box(self, shape):
        h, w = shape
        if self.center_box is not None:
            return tuple(int(v) for v in self.center_box)
        return (w // 4, w - 1 - w // 4, h // 4, h - 1 - h // 4)


_CHUNK = 256


def _bilinear(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = img.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.intp), w - 2 if w > 1 else 0)
    y0 = np.minimum(np.floor(y).astype(np.intp), h - 2 if h > 1 else 0)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def _angles(n_angles: int, sectors=None) -> np.ndarray:
    theta = 2 * np.pi * np.arange(n_angles) / n_angles
    if sectors is None:
        return theta
    deg = np.degrees(theta)
    keep = np.zeros(n_angles, dtype=bool)
    for lo, hi in sectors:
        keep |= ((deg - lo) % 360.0) <= (hi - lo)
    return theta[keep]


def contrast_profiles(img, centers, radii, angles, sigma: float, nearest: bool = False) -> np.ndarray:
    """Blurred radial derivative of the circular mean intensity.

    Returns an array ``(len(centers), len(radii))``; entry ``[c, k]`` is the
    smoothed derivative at ``radii[k]``. ``radii`` must be consecutive
    integers. With ``nearest`` the circles are sampled at the closest pixel
    (centers must then be integral), which is what the coarse grid uses.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    radii = np.asarray(radii, dtype=np.float64)
    pad = int(math.ceil(3 * sigma)) + 1
    ext = np.arange(max(0.0, radii[0] - pad - 1), radii[-1] + pad + 2, dtype=np.float64)
    cos_t = np.cos(angles)
    sin_t = np.sin(angles)
    deriv = np.empty((len(centers), len(ext)))
    if nearest:
        ox = np.rint(ext[:, None] * cos_t[None, :]).astype(np.intp)
        oy = np.rint(ext[:, None] * sin_t[None, :]).astype(np.intp)
        flat = img.ravel()
    for start in range(0, len(centers), _CHUNK):
        c = centers[start:start + _CHUNK]
        if nearest:
            cx = c[:, 0].astype(np.intp)[:, None, None]
            cy = c[:, 1].astype(np.intp)[:, None, None]
            x = np.clip(cx + ox[None], 0, w - 1)
            y = np.clip(cy + oy[None], 0, h - 1)
            means = flat[y * w + x].mean(axis=2)
        else:
            xs = c[:, 0, None, None] + ext[None, :, None] * cos_t[None, None, :]
            ys = c[:, 1, None, None] + ext[None, :, None] * sin_t[None, None, :]
            means = _bilinear(img, xs, ys).mean(axis=2)
        deriv[start:start + _CHUNK] = np.gradient(means, axis=1)
    if sigma > 0:
        deriv = gaussian_filter1d(deriv, sigma, axis=1, mode="nearest")
    idx = np.searchsorted(ext, radii)
    return deriv[:, idx]


def _circle_search(img, xs, ys, radii, angles, sigma, nearest=False):
    """Best (score, cx, cy, r) over the grid; ties go to smallest (r, cy, cx)."""
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
    prof = contrast_profiles(img, centers, radii, angles, sigma, nearest=nearest)
    # reorder to (r, cy, cx) lexicographic so argmax's first hit breaks ties
    table = prof.T.reshape(len(radii), len(ys), len(xs))
    flat = int(np.argmax(table))
    ri, yi, xi = np.unravel_index(flat, table.shape)
    return float(table[ri, yi, xi]), float(xs[xi]), float(ys[yi]), float(radii[ri])


def _coarse_to_fine(img, box, radii, angles, cfg: SegmentConfig):
    x_lo, x_hi, y_lo, y_hi = box
    stride = cfg.coarse_stride
    xs = np.arange(x_lo, x_hi + 1, stride)
    ys = np.arange(y_lo, y_hi + 1, stride)
    _, cx, cy, _ = _circle_search(img, xs, ys, radii, angles, cfg.blur_sigma, nearest=True)
    hw = cfg.refine_halfwidth
    xs = np.arange(max(x_lo, cx - hw), min(x_hi, cx + hw) + 1)
    ys = np.arange(max(y_lo, cy - hw), min(y_hi, cy + hw) + 1)
    return _circle_search(img, xs, ys, radii, angles, cfg.blur_sigma)


def segment_circular(img, cfg: SegmentConfig | None = None) -> SegmentationResult:
    cfg = cfg or SegmentConfig()
    img = np.asarray(img)
    h, w = img.shape
    p_lo, p_hi = (int(v) for v in cfg.pupil_radius)
    i_lo, i_hi = (int(v) for v in cfg.iris_radius)
    box = cfg.resolved_box(img.shape)
    if not (0 < p_lo <= p_hi < i_hi and i_lo <= i_hi and p_hi < i_lo):
        raise SearchRangeInvalid(f"radius ranges pupil={cfg.pupil_radius} iris={cfg.iris_radius}")
    if not (0 <= box[0] <= box[1] < w and 0 <= box[2] <= box[3] < h):
        raise SearchRangeInvalid(f"center box {box} outside {w}x{h} image")
    if cfg.coarse_stride < 1 or cfg.refine_halfwidth < 0 or cfg.n_angles < 8:
        raise SearchRangeInvalid("bad stride, refinement window or angle count")

    work = img.astype(np.float64)
    score, px, py, pr = _coarse_to_fine(
        work, box, np.arange(p_lo, p_hi + 1), _angles(cfg.n_angles), cfg)
    if not score >= cfg.contrast_floor:
        raise NoBoundaryFound(f"pupil contrast {score:.3f} below floor {cfg.contrast_floor}")

    off = cfg.iris_center_offset
    ibox = (max(0, int(px) - off), min(w - 1, int(px) + off),
            max(0, int(py) - off), min(h - 1, int(py) + off))
    i_lo = max(i_lo, int(pr) + 1)
    score, ix, iy, ir = _coarse_to_fine(
        work, ibox, np.arange(i_lo, i_hi + 1), _angles(cfg.n_angles, cfg.iris_sectors), cfg)
    if not score >= cfg.contrast_floor:
        raise NoBoundaryFound(f"iris contrast {score:.3f} below floor {cfg.contrast_floor}")

    pupil = Circle(px, py, pr)
    iris = Circle(ix, iy, ir)
    if not iris.contains(pupil):
        raise NoBoundaryFound(f"iris circle {iris} does not enclose pupil {pupil}")
    mask = annulus_mask(img.shape, pupil, iris) & (img <= cfg.specular_threshold)
    return SegmentationResult(pupil, iris, mask)


def ingest_mask(img, mask_path, pupil: Circle, iris: Circle) -> SegmentationResult:
    """Combine an external segmenter's mask with its circle parameters.

    The stored mask is the intersection of the given raster (binarized at
    128) with the annulus between the two circles.
    """
    img = np.asarray(img)
    raw = read_mask(mask_path)
    if raw.shape != img.shape:
        raise DimensionMismatch(f"mask {raw.shape[::-1]} vs image {img.shape[::-1]}")
    check_circles(pupil, iris, img.shape)
    return SegmentationResult(pupil, iris, raw & annulus_mask(img.shape, pupil, iris))


def read_circles(path):
    """Parse a ``px py pr ix iy ir`` sidecar into ``(pupil, iris)``."""
    try:
        with open(path) as fh:
            vals = [float(v) for v in fh.read().split()]
    except (OSError, ValueError) as exc:
        raise InvalidCircles(f"{path}: {exc}") from exc
    if len(vals) != 6:
        raise InvalidCircles(f"{path}: expected 6 numbers, found {len(vals)}")
    return Circle(*vals[:3]), Circle(*vals[3:])


def write_circles(pupil: Circle, iris: Circle, path) -> None:
    vals = (pupil.cx, pupil.cy, pupil.r, iris.cx, iris.cy, iris.r)
    with open(path, "w") as fh:
        fh.write(" ".join(repr(float(v)) for v in vals) + "\n")
