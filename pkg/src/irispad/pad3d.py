"""Two-light photometric stereo and the surface-flatness attack score."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyMask, TooFewValidPixels

MIN_VALID_PIXELS = 100
DEFAULT_HALF_ANGLE = 20.0
# EER threshold of ospad3d_score on synthetic live/textured-lens pairs, rounded
# (tools/calibrate_tau3.py gives 0.00999); recompute when the renderer changes.
DEFAULT_TAU3 = 0.01


@dataclass(frozen=True)
class IlluminationGeometry:
    """Unit directions toward the left and right LEDs; the camera looks down -z."""

    l_left: tuple
    l_right: tuple

    def __post_init__(self):
        for v in (self.l_left, self.l_right):
            if abs(math.fsum(c * c for c in v) - 1.0) > 1e-9:
                raise ValueError(f"light direction {v} is not unit length")
            if not v[2] > 0:
                raise ValueError(f"light direction {v} must point toward the camera side (z > 0)")
        if tuple(self.l_left) == tuple(self.l_right):
            raise ValueError("the two light directions must differ")

    @classmethod
    def symmetric(cls, half_angle_deg: float = DEFAULT_HALF_ANGLE) -> "IlluminationGeometry":
        t = math.radians(half_angle_deg)
        s, c = math.sin(t), math.cos(t)
        return cls((-s, 0.0, c), (s, 0.0, c))

    def mirrored(self) -> "IlluminationGeometry":
        """Swap sides by negating the x component of both lights."""
        lx, ly, lz = self.l_left
        rx, ry, rz = self.l_right
        return IlluminationGeometry((-lx, ly, lz), (-rx, ry, rz))

    def matrix(self) -> np.ndarray:
        return np.array([self.l_left, self.l_right], dtype=np.float64)


@dataclass
class NormalField:
    normals: np.ndarray  # (rows, cols, 3)
    valid: np.ndarray  # (rows, cols) bool

    @property
    def shape(self):
        return self.valid.shape


@dataclass
class PadOutcome:
    """A PAD verdict; ``decision == "attack"`` iff ``score >= threshold``."""

    score: float
    decision: str
    source: str
    threshold: float
    details: dict = field(default_factory=dict)

    @property
    def is_attack(self) -> bool:
        return self.decision == "attack"


def decide(score: float, threshold: float, source: str, **details) -> PadOutcome:
    return PadOutcome(score=float(score), decision="attack" if score >= threshold else "live",
                      source=source, threshold=float(threshold), details=details)


def pseudo_inverse(geom: IlluminationGeometry) -> np.ndarray:
    """Minimum-norm right inverse ``L^T (L L^T)^-1`` of the 2x3 light matrix.

    The 2x2 Gram inverse is written out in closed form so that a left/right
    symmetric setup yields exactly symmetric weights.
    """
    L = geom.matrix()
    g11 = float(L[0] @ L[0])
    g12 = float(L[0] @ L[1])
    g22 = float(L[1] @ L[1])
    det = g11 * g22 - g12 * g12
    if det <= 0:
        raise ValueError("light directions are parallel")
    ginv = np.array([[g22, -g12], [-g12, g11]]) / det
    # elementwise rather than matmul: BLAS may fuse multiply-adds asymmetrically
    return np.stack([L[0] * ginv[0, j] + L[1] * ginv[1, j] for j in range(2)], axis=1)


def estimate_normals(img_left, img_right, mask, geom: IlluminationGeometry) -> NormalField:
    """Per-pixel minimum-norm Lambertian solve from a left/right image pair.

    The component along ``l_left x l_right`` is unobservable with two lights
    and comes out as zero.
    """
    left = np.asarray(img_left, dtype=np.float64)
    right = np.asarray(img_right, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if left.shape != right.shape or left.shape != mask.shape:
        raise DimensionMismatch(
            f"left {left.shape}, right {right.shape}, mask {mask.shape}", stage="pad3d")
    if mask.sum() < 0.05 * mask.size:
        raise EmptyMask("PAD mask covers less than 5% of the image", stage="pad3d")

    pinv = pseudo_inverse(geom)
    m = left[..., None] * pinv[:, 0] + right[..., None] * pinv[:, 1]
    norm = np.sqrt(np.einsum("...i,...i->...", m, m))
    valid = mask & (norm >= 1e-9)
    normals = np.zeros_like(m)
    normals[valid] = m[valid] / norm[valid][:, None]
    return NormalField(normals=normals, valid=valid)


def ospad3d_score(field: NormalField) -> float:
    """Population variance of distances from each valid normal to their mean.

    The mean normal is not renormalized.
    """
    pts = field.normals[field.valid]
    if len(pts) < MIN_VALID_PIXELS:
        raise TooFewValidPixels(f"{len(pts)} valid normals, need {MIN_VALID_PIXELS}")
    mean = pts.mean(axis=0)
    d = np.sqrt(((pts - mean) ** 2).sum(axis=1))
    return float(max(0.0, np.var(d)))


def ospad3d_decide(img_left, img_right, mask, geom: IlluminationGeometry,
                   tau3: float = DEFAULT_TAU3) -> PadOutcome:
    score = ospad3d_score(estimate_normals(img_left, img_right, mask, geom))
    return decide(score, tau3, "pad3d")


def calibrate_tau3(bona_fide_scores, attack_scores) -> float:
    """Threshold at the equal-error point of a labeled calibration set."""
    from .evalmetrics import eer_threshold

    return eer_threshold(bona_fide_scores, attack_scores)
