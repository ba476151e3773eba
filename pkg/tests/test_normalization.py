import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irispad.errors import EmptyMask
from irispad.normalization import load_normalized, normalize, sample_grid, save_normalized
from irispad.segmentation import Circle, SegmentationResult, annulus_mask
from irispad.synthgen import SynthSpec, render_eye


def _seg(shape, pupil, iris, mask=None):
    if mask is None:
        mask = annulus_mask(shape, pupil, iris)
    return SegmentationResult(pupil, iris, mask)


def test_midpoint_sample_reads_expected_source():
    shape = (200, 200)
    seg = _seg(shape, Circle(100, 100, 20), Circle(100, 100, 60))
    x, y = sample_grid(seg, 65, 512)
    assert (x[32, 0], y[32, 0]) == (140.0, 100.0)
    yy, xx = np.mgrid[0:200, 0:200]
    img = ((xx * 7 + yy * 3) % 256).astype(np.uint8)
    norm = normalize(img, seg, 65, 512)
    assert norm.pixels[32, 0] == img[100, 140]


def test_row_zero_on_pupil_last_row_on_iris():
    seg = _seg((200, 220), Circle(105, 98, 18), Circle(110, 100, 70))
    x, y = sample_grid(seg, 16, 64)
    theta = 2 * np.pi * np.arange(64) / 64
    assert np.allclose(np.hypot(x[0] - 105, y[0] - 98), 18)
    assert np.allclose(np.hypot(x[-1] - 110, y[-1] - 100), 70)
    assert np.allclose(np.arctan2(y[-1] - 100, x[-1] - 110) % (2 * np.pi), theta)


@given(st.integers(2, 80), st.integers(8, 600),
       st.floats(5, 30), st.floats(-5, 5), st.floats(-5, 5), st.floats(40, 60))
def test_shape_and_radial_monotonicity(rows, cols, rp, dx, dy, ri):
    shape = (150, 150)
    seg = _seg(shape, Circle(75 + dx, 75 + dy, rp), Circle(75, 75, ri))
    img = np.full(shape, 90, np.uint8)
    norm = normalize(img, seg, rows, cols)
    assert norm.pixels.shape == (rows, cols) and norm.mask.shape == (rows, cols)
    x, y = sample_grid(seg, rows, cols)
    # distance from the pupil boundary point grows strictly with the row index
    d = np.hypot(x - x[0], y - y[0])
    assert np.all(np.diff(d, axis=0) > 0)


@pytest.mark.parametrize("k", [12, -7, 16])
def test_rotation_becomes_column_shift(k):
    # a smooth texture keeps bilinear resampling error under the 2-level tolerance
    kw = dict(seed=0, identity=5, noise_sigma=0.0, glints=False,
              angular_band=(2, 8), radial_band=(0.5, 1.5))
    img0, truth0 = render_eye(SynthSpec(**kw))
    img1, truth1 = render_eye(SynthSpec(rotation=2 * math.pi * k / 512, **kw))
    n0 = normalize(img0, truth0)
    n1 = normalize(img1, truth1)
    both = n1.mask & np.roll(n0.mask, k, axis=1)
    both[:3] = both[-3:] = False  # interior rows only
    assert both.sum() > 0.8 * both.size
    assert np.max(np.abs(n1.pixels - np.roll(n0.pixels, k, axis=1))[both]) <= 2.0


def test_masked_source_pixel_clears_dependent_bits():
    shape = (200, 200)
    pupil, iris = Circle(100, 100, 20), Circle(100, 100, 60)
    mask = annulus_mask(shape, pupil, iris)
    mask[100, 140] = False
    norm = normalize(np.full(shape, 50, np.uint8), _seg(shape, pupil, iris, mask), 65, 512)
    assert not norm.mask[32, 0]
    assert norm.mask[32, 256]


def test_mask_is_within_pullback():
    img, truth = render_eye(SynthSpec(seed=2, identity=9))
    norm = normalize(img, truth)
    x, y = sample_grid(truth, 64, 512)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    m = truth.mask
    for i, j in zip(*np.nonzero(norm.mask)):
        a, b = y0[i, j], x0[i, j]
        assert m[a, b] and m[a, b + 1] and m[a + 1, b] and m[a + 1, b + 1]


def test_empty_mask_rejected():
    shape = (200, 200)
    pupil, iris = Circle(100, 100, 20), Circle(100, 100, 60)
    mask = np.zeros(shape, bool)
    mask[95:105, 130:150] = True  # about 2% of the annulus
    with pytest.raises(EmptyMask) as err:
        normalize(np.zeros(shape, np.uint8), _seg(shape, pupil, iris, mask & annulus_mask(shape, pupil, iris)))
    assert err.value.stage == "normalization"


def test_save_load_roundtrip(tmp_path):
    img, truth = render_eye(SynthSpec(seed=1, identity=1))
    norm = normalize(img, truth, 32, 128)
    paths = save_normalized(norm, tmp_path / "eye")
    assert [p.endswith(s) for p, s in zip(paths, ("_norm.pgm", "_normmask.pgm"))] == [True, True]
    back = load_normalized(tmp_path / "eye")
    assert np.array_equal(back.mask, norm.mask)
    assert np.max(np.abs(back.pixels - norm.pixels)) <= 0.5
