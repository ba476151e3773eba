import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irispad.encoding import default_recognition_bank, encode, match
from irispad.errors import InvalidSpec
from irispad.normalization import normalize
from irispad.pad3d import IlluminationGeometry, estimate_normals, ospad3d_score
from irispad.segmentation import Circle, annulus_mask
from irispad.synthgen import (
    IRIS_CONTRAST, IRIS_MEAN, IRIS_RANGE, LENS_COVERAGE, SynthSpec, apply_lens, capture_spec,
    identity_texture, render_eye, render_pair,
)

BANK = default_recognition_bank()


def template(spec):
    img, truth = render_eye(spec)
    return encode(normalize(img, truth), BANK)


def test_same_identity_two_captures():
    a, b = capture_spec(7, 0), capture_spec(7, 1)
    ia, _ = render_eye(a)
    ib, _ = render_eye(b)
    assert not np.array_equal(ia, ib)
    assert match(template(a), template(b)).score < 0.25


def test_different_identities_near_half():
    score = match(template(capture_spec(7, 0)), template(capture_spec(8, 0))).score
    assert 0.4 < score < 0.6


def test_noise_free_render_is_deterministic():
    spec = SynthSpec(seed=3, identity=2, noise_sigma=0.0)
    a, ta = render_eye(spec)
    b, tb = render_eye(spec)
    assert np.array_equal(a, b) and np.array_equal(ta.mask, tb.mask)
    noisy = SynthSpec(seed=3, identity=2)
    assert np.array_equal(render_eye(noisy)[0], render_eye(noisy)[0])


def test_ground_truth_geometry():
    spec = capture_spec(3, 2)
    img, truth = render_eye(spec)
    assert truth.pupil == spec.pupil and truth.iris == spec.iris
    assert not np.any(truth.mask & ~annulus_mask(img.shape, spec.pupil, spec.iris))
    yy, xx = np.mgrid[0:img.shape[0], 0:img.shape[1]]
    inside = np.hypot(xx - spec.pupil.cx, yy - spec.pupil.cy) < spec.pupil.r - 5
    assert abs(np.median(img[inside]) - 10) <= 3
    assert abs(np.median(img[:20, :20]) - 230) <= 3


def test_identity_texture_depends_only_on_identity():
    k0 = capture_spec(12, 0, noise_sigma=0.0, glints=False)
    # keep the rotation difference on the column grid so the shift is exact
    k1 = replace(capture_spec(12, 1, noise_sigma=0.0, glints=False),
                 rotation=k0.rotation + 3 * 2 * math.pi / 512)
    n0 = normalize(*render_eye(k0))
    n1 = normalize(*render_eye(k1))
    base = round((k1.rotation - k0.rotation) * 512 / (2 * math.pi))

    def corr(shift):
        a = np.roll(n0.pixels, shift, axis=1)
        both = np.roll(n0.mask, shift, axis=1) & n1.mask
        both[:3] = both[-3:] = False
        return np.corrcoef(a[both], n1.pixels[both])[0, 1]

    r = max(corr(base + d) for d in (-1, 0, 1))
    assert r > 0.99


def test_lens_none_is_identity():
    img, _ = render_eye(SynthSpec(seed=1, identity=1))
    assert np.array_equal(apply_lens(img, SynthSpec(lens="none")), img)


@pytest.mark.parametrize("kind", ["textured", "opaque"])
def test_lens_coverage_from_diff_mask(kind):
    base = SynthSpec(seed=0, identity=3, noise_sigma=0.0, glints=False)
    clean, truth = render_eye(base)
    lensed, _ = render_eye(SynthSpec(seed=0, identity=3, noise_sigma=0.0, glints=False,
                                     lens=kind, lens_seed=2))
    annulus = annulus_mask(clean.shape, base.pupil, base.iris)
    changed = (clean != lensed) & annulus
    ratio = changed.sum() / annulus.sum()
    assert abs(ratio - LENS_COVERAGE) <= 0.02
    # the uncovered ring sits next to the pupil
    yy, xx = np.mgrid[0:clean.shape[0], 0:clean.shape[1]]
    d = np.hypot(xx - base.pupil.cx, yy - base.pupil.cy)
    assert not changed[(d > base.pupil.r) & (d < base.pupil.r + 10)].any()
    assert not (clean != lensed)[~annulus].any()


def test_apply_lens_matches_render():
    spec = SynthSpec(seed=0, identity=3, noise_sigma=0.0, glints=False)
    clean, _ = render_eye(spec)
    lensed_spec = SynthSpec(seed=0, identity=3, noise_sigma=0.0, glints=False, lens="opaque", lens_seed=4)
    assert np.array_equal(apply_lens(clean, lensed_spec), render_eye(lensed_spec)[0])


def test_textured_lens_shifts_genuine_scores():
    gaps = []
    for ident in range(5):
        g0, g1 = template(capture_spec(ident, 0)), template(capture_spec(ident, 1))
        lensed = template(capture_spec(ident, 2, lens="textured", lens_seed=ident % 7))
        gaps.append(match(g0, lensed).score - match(g0, g1).score)
    assert min(gaps) > 0


def test_flat_plane_pair_is_symmetric():
    spec = SynthSpec(seed=5, identity=5, surface="flat", noise_sigma=0.0)
    left, right, mask = render_pair(spec)
    assert np.array_equal(left, right)
    field = estimate_normals(left, right, mask, spec.geometry)
    assert ospad3d_score(field) == 0.0


def test_bumpy_scores_above_dome():
    for seed in range(3):
        flat = SynthSpec(seed=seed, identity=seed, surface="flat-dome")
        bumpy = SynthSpec(seed=seed, identity=seed, surface="bumpy")
        geom = IlluminationGeometry.symmetric()
        s_flat = ospad3d_score(estimate_normals(*render_pair(flat), geom))
        s_bumpy = ospad3d_score(estimate_normals(*render_pair(bumpy), geom))
        assert s_bumpy > s_flat


def _height_dome(spec, x, y):
    return -spec.dome_height * ((x - spec.iris.cx) ** 2 + (y - spec.iris.cy) ** 2) / spec.iris.r ** 2


def test_lambertian_closed_form():
    spec = SynthSpec(seed=2, identity=9, width=200, height=160, pupil=Circle(100, 80, 20),
                     iris=Circle(100, 80, 60), noise_sigma=0.0, glints=False)
    left, right, annulus = render_pair(spec)
    h = 1e-4
    for y in range(0, 160, 7):
        for x in range(0, 200, 7):
            hx = (_height_dome(spec, x + h, y) - _height_dome(spec, x - h, y)) / (2 * h)
            hy = (_height_dome(spec, x, y + h) - _height_dome(spec, x, y - h)) / (2 * h)
            n = np.array([-hx, -hy, 1.0])
            n /= np.linalg.norm(n)
            d = math.hypot(x - 100, y - 80)
            if d <= 20:
                albedo = 10.0
            elif d <= 60:
                t = (d - 20) / 40
                tex = identity_texture(9, t, math.atan2(y - 80, x - 100) % (2 * math.pi))
                albedo = min(max(IRIS_MEAN + IRIS_CONTRAST * float(tex), IRIS_RANGE[0]), IRIS_RANGE[1])
            else:
                albedo = 230.0
            for img, light in ((left, spec.geometry.l_left), (right, spec.geometry.l_right)):
                want = albedo * max(0.0, float(n @ np.array(light)))
                assert abs(float(img[y, x]) - want) <= 0.5 + 1e-6


@settings(max_examples=8)
@given(st.floats(0, 300), st.integers(0, 10**6))
def test_intensities_clamped(sigma, seed):
    spec = SynthSpec(seed=seed, identity=seed % 50, width=160, height=120,
                     pupil=Circle(80, 60, 15), iris=Circle(80, 60, 45), noise_sigma=sigma)
    img, _ = render_eye(spec)
    left, right, _ = render_pair(spec)
    for a in (img, left, right):
        assert a.dtype == np.uint8 and a.min() >= 0 and a.max() <= 255


@pytest.mark.parametrize("kw", [
    dict(lens="tinted"), dict(surface="wavy"), dict(bump_amplitude=-1.0),
    dict(pupil=Circle(320, 240, 120)), dict(iris=Circle(900, 240, 100)),
    dict(angular_band=(0, 3)), dict(width=0),
])
def test_invalid_specs(kw):
    with pytest.raises(InvalidSpec):
        render_eye(SynthSpec(**kw))
