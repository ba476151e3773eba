"""Deterministic synthetic eyes, contact-lens overlays and two-light pairs.

The iris texture is band-limited noise in rubber-sheet coordinates seeded by
the identity alone, so every capture of one identity shares its texture while
noise, rotation and small pose changes come from the capture seed. Nothing
here aims at photorealism; the point is controllable genuine/imposter/attack
structure with exact ground truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidSpec
from .pad3d import IlluminationGeometry
from .segmentation import Circle, SegmentationResult, annulus_mask, check_circles

PUPIL_LEVEL = 10.0
SCLERA_LEVEL = 230.0
IRIS_MEAN = 120.0
IRIS_CONTRAST = 32.0
IRIS_RANGE = (50.0, 200.0)
LENS_COVERAGE = 0.70
N_COMPONENTS = 96


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    identity: int = 0
    width: int = 640
    height: int = 480
    pupil: Circle = Circle(320.0, 240.0, 40.0)
    iris: Circle = Circle(320.0, 240.0, 100.0)
    # angular cycles per revolution and radial cycles across the annulus
    angular_band: tuple = (6, 40)
    radial_band: tuple = (0.5, 3.5)
    noise_sigma: float = 2.0
    rotation: float = 0.0
    lens: str = "none"
    lens_seed: int = 0
    surface: str = "flat-dome"
    dome_height: float = 4.0
    bump_amplitude: float = 1.0
    bump_frequency: float = 1.0 / 12.0
    glints: bool = True
    geometry: IlluminationGeometry = field(default_factory=IlluminationGeometry.symmetric)

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InvalidSpec(f"bad image size {self.width}x{self.height}")
        try:
            check_circles(self.pupil, self.iris, (self.height, self.width))
        except Exception as exc:
            raise InvalidSpec(str(exc)) from exc
        if self.lens not in ("none", "textured", "opaque"):
            raise InvalidSpec(f"unknown lens {self.lens!r}")
        if self.surface not in ("flat", "flat-dome", "bumpy"):
            raise InvalidSpec(f"unknown surface {self.surface!r}")
        if self.bump_amplitude < 0 or self.noise_sigma < 0 or self.dome_height < 0:
            raise InvalidSpec("amplitudes and noise must be non-negative")
        lo, hi = self.angular_band
        if not 1 <= lo <= hi:
            raise InvalidSpec(f"bad angular band {self.angular_band}")
        lo, hi = self.radial_band
        if not 0 <= lo <= hi:
            raise InvalidSpec(f"bad radial band {self.radial_band}")


def _identity_rng(identity: int) -> np.random.Generator:
    return np.random.default_rng([0x1815, int(identity)])


def _capture_rng(spec: SynthSpec, salt: int) -> np.random.Generator:
    return np.random.default_rng([0xCA97, int(spec.identity), int(spec.seed), salt])


def polar_coordinates(shape, pupil: Circle, iris: Circle):
    """Invert the rubber-sheet map for every pixel.

    Returns ``(t, theta)`` with ``t`` the radial fraction (0 at the pupil
    boundary, 1 at the iris boundary) and ``theta`` the angle, so that
    ``pixel = (1-t)*P(theta) + t*I(theta)``. Values of ``t`` outside [0, 1]
    belong to pixels outside the annulus.
    """
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    qx = xx - pupil.cx
    qy = yy - pupil.cy
    dx = iris.cx - pupil.cx
    dy = iris.cy - pupil.cy
    dr = iris.r - pupil.r
    # |q - t d| = r_p + t dr, a quadratic in t
    a = dx * dx + dy * dy - dr * dr
    b = -2.0 * (qx * dx + qy * dy + pupil.r * dr)
    c = qx * qx + qy * qy - pupil.r * pupil.r
    if abs(a) < 1e-12:
        t = -c / b
    else:
        disc = np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))
        # a < 0 because the pupil is strictly inside the iris; this root has
        # a positive boundary radius r_p + t*dr
        t = (-b - disc) / (2 * a)
    ux = qx - t * dx
    uy = qy - t * dy
    theta = np.arctan2(uy, ux) % (2 * np.pi)
    return t, theta


def identity_texture(identity: int, t, theta, angular_band=(6, 40), radial_band=(0.5, 3.5)):
    """Band-limited texture in rubber-sheet coordinates, unit-ish variance."""
    rng = _identity_rng(identity)
    m = rng.integers(angular_band[0], angular_band[1] + 1, size=N_COMPONENTS)
    m *= rng.choice([-1, 1], size=N_COMPONENTS)
    v = rng.uniform(radial_band[0], radial_band[1], size=N_COMPONENTS)
    phase = rng.uniform(0, 2 * np.pi, size=N_COMPONENTS)
    amp = rng.uniform(0.5, 1.0, size=N_COMPONENTS)
    amp /= math.sqrt(float(np.sum(amp ** 2)) / 2.0)
    t = np.asarray(t, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    out = np.zeros(np.broadcast(t, theta).shape)
    for k in range(N_COMPONENTS):
        out += amp[k] * np.cos(2 * np.pi * v[k] * t + m[k] * theta + phase[k])
    return out


def _albedo(spec: SynthSpec) -> tuple:
    """Noise-free float raster before lens overprint, and the annulus mask."""
    spec.validate()
    shape = (spec.height, spec.width)
    t, theta = polar_coordinates(shape, spec.pupil, spec.iris)
    annulus = annulus_mask(shape, spec.pupil, spec.iris)
    img = np.full(shape, SCLERA_LEVEL)
    yy, xx = np.mgrid[0:spec.height, 0:spec.width]
    img[np.hypot(xx - spec.pupil.cx, yy - spec.pupil.cy) <= spec.pupil.r] = PUPIL_LEVEL
    tex = identity_texture(spec.identity, t[annulus], theta[annulus] - spec.rotation,
                           spec.angular_band, spec.radial_band)
    img[annulus] = np.clip(IRIS_MEAN + IRIS_CONTRAST * tex, *IRIS_RANGE)
    return img, annulus


def _stamp_glints(img: np.ndarray, spec: SynthSpec) -> None:
    if not spec.glints:
        return
    yy, xx = np.mgrid[0:spec.height, 0:spec.width]
    r = max(1.0, spec.pupil.r * 0.08)
    for sx in (-0.3, 0.3):
        gx = spec.pupil.cx + sx * spec.pupil.r
        gy = spec.pupil.cy - 0.25 * spec.pupil.r
        img[np.hypot(xx - gx, yy - gy) <= r] = 255.0


def _capture(clean: np.ndarray, spec: SynthSpec, salt: int) -> np.ndarray:
    out = clean
    if spec.noise_sigma > 0:
        out = clean + _capture_rng(spec, salt).normal(0.0, spec.noise_sigma, clean.shape)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def lens_region(shape, pupil: Circle, iris: Circle, coverage: float = LENS_COVERAGE) -> np.ndarray:
    """Outer sub-annulus covering ``coverage`` of the iris annulus area.

    The inner ring next to the pupil stays uncovered.
    """
    t, _ = polar_coordinates(shape, pupil, iris)
    annulus = annulus_mask(shape, pupil, iris)
    # area fraction between radius fraction t and 1 is approximately
    # ((r_i^2 - rho(t)^2) / (r_i^2 - r_p^2)) for nearly concentric circles
    rp, ri = pupil.r, iris.r
    rho_c = math.sqrt(ri * ri - coverage * (ri * ri - rp * rp))
    t_c = (rho_c - rp) / (ri - rp)
    return annulus & (t >= t_c)


def lens_pattern(shape, kind: str, lens_seed: int) -> np.ndarray:
    """Printed lens texture: bright dots on a dark print (textured) or smooth blobs (opaque)."""
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng([0x1E45, int(lens_seed), 0 if kind == "textured" else 1])
    h, w = shape
    if kind == "textured":
        pattern = np.full(shape, 55.0)
        yy, xx = np.mgrid[0:h, 0:w]
        n_dots = max(1, h * w // 60)
        cx = rng.uniform(0, w, n_dots)
        cy = rng.uniform(0, h, n_dots)
        rad = rng.uniform(1.0, 2.5, n_dots)
        dots = np.zeros(shape, dtype=bool)
        for x, y, r in zip(cx, cy, rad):
            x0, x1 = int(max(0, x - r - 1)), int(min(w, x + r + 2))
            y0, y1 = int(max(0, y - r - 1)), int(min(h, y + r + 2))
            sub = (xx[y0:y1, x0:x1] - x) ** 2 + (yy[y0:y1, x0:x1] - y) ** 2 <= r * r
            dots[y0:y1, x0:x1] |= sub
        pattern[dots] = 205.0
        return pattern
    noise = gaussian_filter(rng.standard_normal(shape), sigma=10.0, mode="wrap")
    noise /= noise.std() + 1e-12
    return np.clip(130.0 + 35.0 * noise, 60.0, 200.0)


def _overprint(img: np.ndarray, spec: SynthSpec) -> np.ndarray:
    if spec.lens == "none":
        return img
    shape = img.shape
    region = lens_region(shape, spec.pupil, spec.iris)
    pattern = lens_pattern(shape, spec.lens, spec.lens_seed)
    out = img.copy()
    if spec.lens == "textured":
        out[region] = 0.8 * pattern[region] + 0.2 * img[region]
    else:
        out[region] = pattern[region]
    return out


def render_eye(spec: SynthSpec):
    """Render one capture; returns ``(image, ground-truth SegmentationResult)``.

    The lens named in ``spec`` is applied. The ground-truth mask is the
    annulus minus saturated glint pixels.
    """
    clean, annulus = _albedo(spec)
    clean = _overprint(clean, spec)
    _stamp_glints(clean, spec)
    img = _capture(clean, spec, salt=0)
    truth = SegmentationResult(spec.pupil, spec.iris, annulus & (img <= 250))
    return img, truth


def apply_lens(img, spec: SynthSpec) -> np.ndarray:
    """Overprint the lens described by ``spec`` onto an existing image."""
    img = np.asarray(img)
    if spec.lens == "none":
        return img.copy()
    out = _overprint(img.astype(np.float64), spec)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# two-light rendering


def height_gradient(spec: SynthSpec, xx, yy, phase=(0.0, 0.0)):
    """Analytic ``(dh/dx, dh/dy)`` of the eye surface."""
    cx, cy, ri = spec.iris.cx, spec.iris.cy, spec.iris.r
    gx = np.zeros_like(xx, dtype=np.float64)
    gy = np.zeros_like(yy, dtype=np.float64)
    if spec.surface in ("flat-dome", "bumpy"):
        gx = gx - 2.0 * spec.dome_height * (xx - cx) / (ri * ri)
        gy = gy - 2.0 * spec.dome_height * (yy - cy) / (ri * ri)
    if spec.surface == "bumpy":
        k = 2 * np.pi * spec.bump_frequency
        a = spec.bump_amplitude
        sx = np.sin(k * xx + phase[0])
        sy = np.sin(k * yy + phase[1])
        gx = gx + a * k * np.cos(k * xx + phase[0]) * sy
        gy = gy + a * k * sx * np.cos(k * yy + phase[1])
    return gx, gy


def surface_normals(spec: SynthSpec) -> np.ndarray:
    """Unit normals ``(-h_x, -h_y, 1)/norm`` of the rendered height field."""
    yy, xx = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    phase = tuple(_capture_rng(spec, salt=7).uniform(0, 2 * np.pi, 2))
    gx, gy = height_gradient(spec, xx, yy, phase)
    n = np.stack([-gx, -gy, np.ones_like(gx)], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def shade(albedo: np.ndarray, normals: np.ndarray, light) -> np.ndarray:
    """Lambertian intensity ``albedo * max(0, n . l)`` before quantization."""
    light = np.asarray(light, dtype=np.float64)
    return albedo * np.maximum(0.0, normals @ light)


def render_pair(spec: SynthSpec):
    """Render the left-LED and right-LED images plus the iris mask."""
    albedo, annulus = _albedo(spec)
    albedo = _overprint(albedo, spec)
    normals = surface_normals(spec)
    left = _capture(shade(albedo, normals, spec.geometry.l_left), spec, salt=1)
    right = _capture(shade(albedo, normals, spec.geometry.l_right), spec, salt=2)
    return left, right, annulus


# ---------------------------------------------------------------------------
# datasets


def capture_spec(identity: int, capture: int, base: SynthSpec | None = None,
                 max_rotation: float = math.radians(5.0), max_offset: float = 3.0,
                 **overrides) -> SynthSpec:
    """A per-capture spec: small seeded rotation, translation and dilation."""
    base = base or SynthSpec()
    rng = np.random.default_rng([0x5EED, int(identity), int(capture)])
    dx, dy = rng.uniform(-max_offset, max_offset, 2)
    dil = rng.uniform(-2.0, 2.0)
    rot = rng.uniform(-max_rotation, max_rotation)
    pupil = Circle(base.pupil.cx + dx, base.pupil.cy + dy, base.pupil.r + dil)
    iris = Circle(base.iris.cx + dx, base.iris.cy + dy, base.iris.r)
    return replace(base, seed=capture, identity=identity, pupil=pupil, iris=iris,
                   rotation=rot, **overrides)


PAD_KINDS = ("live", "textured", "opaque")


def pad_pair_spec(index: int, kind: str, base: SynthSpec | None = None) -> SynthSpec:
    """Spec for a PAD sample; ``index`` doubles as identity and lens seed source.

    live: smooth dome surface, no lens. textured: bumpy surface under a dotted
    lens. opaque: flat surface under a smooth opaque print, which produces
    no shadow cues at all.
    """
    if kind == "live":
        return capture_spec(index, 0, base, surface="flat-dome")
    if kind == "textured":
        return capture_spec(index, 0, base, surface="bumpy", lens="textured", lens_seed=index % 7)
    if kind == "opaque":
        return capture_spec(index, 0, base, surface="flat", lens="opaque", lens_seed=index % 7)
    raise InvalidSpec(f"unknown PAD sample kind {kind!r}")
