import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irispad.encoding import (
    FilterBank, IrisTemplate, complement, default_recognition_bank, encode, erode_rows,
    format_filter_bank, format_template, load_filter_bank, load_template, match, match_many,
    parse_filter_bank, parse_template, random_filter_bank, save_template,
)
from irispad.errors import (
    EmptyMask, EvenKernelSide, InsufficientOverlap, MalformedFilterFile, MalformedTemplateFile,
    ShapeMismatch,
)
from irispad.normalization import NormalizedIris
from oracles import correlate_wrap_cols, hamming_oracle


def random_template(seed, n=2, rows=32, cols=64, density=1.0):
    rng = np.random.default_rng(seed)
    planes = rng.random((n, rows, cols)) < 0.5
    mask = rng.random((rows, cols)) < density
    return IrisTemplate(planes, mask)


templates = st.builds(random_template, st.integers(0, 2**32 - 1), st.integers(1, 3),
                      st.sampled_from([32, 40]), st.sampled_from([48, 64]),
                      st.sampled_from([1.0, 0.9, 0.8]))


# filter banks

def test_parse_single_kernel():
    k = np.array([[1, 0, -1], [2, 0, -2], [1, 0, -1]], float)
    bank = parse_filter_bank("BSIF 1 3\n" + " ".join(map(str, k.ravel())))
    assert (bank.n, bank.s) == (1, 3)
    assert np.array_equal(bank.kernels[0], k)


def test_count_mismatch():
    with pytest.raises(MalformedFilterFile):
        parse_filter_bank("BSIF 2 3\n" + " ".join(["0"] * 17))


def test_even_side():
    with pytest.raises(EvenKernelSide):
        parse_filter_bank("BSIF 1 4\n" + " ".join(["0"] * 16))


@pytest.mark.parametrize("text", ["", "XSIF 1 3", "BSIF a 3", "BSIF 1 3\n" + "x " * 9])
def test_garbage_filter_files(text):
    with pytest.raises(MalformedFilterFile):
        parse_filter_bank(text)


def test_kernels_are_centered():
    bank = parse_filter_bank("BSIF 1 3\n" + " ".join(["1"] * 8 + ["10"]))
    assert abs(bank.kernels.sum()) < 1e-12


def test_missing_bank_file(tmp_path):
    with pytest.raises(MalformedFilterFile):
        load_filter_bank(tmp_path / "nope.bsif")


def test_bank_roundtrip_and_default():
    bank = random_filter_bank(4, 7, seed=1)
    again = parse_filter_bank(format_filter_bank(bank))
    assert np.allclose(again.kernels, bank.kernels, atol=1e-15)
    flat = bank.kernels.reshape(4, -1)
    assert np.allclose(flat @ flat.T, np.eye(4), atol=1e-12)
    d = default_recognition_bank()
    assert (d.n, d.s) == (8, 9)
    assert np.all(np.abs(d.kernels.sum(axis=(1, 2))) < 1e-6)


# encoding

def _norm(pixels, mask=None):
    pixels = np.asarray(pixels, dtype=np.float64)
    return NormalizedIris(pixels, np.ones(pixels.shape, bool) if mask is None else mask)


def test_constant_texture_all_zero_bits():
    t = encode(_norm(np.full((16, 64), 93.0)), default_recognition_bank())
    assert not t.planes.any()


def test_negation_flips_nonzero_bits():
    rng = np.random.default_rng(5)
    tex = rng.integers(0, 256, (16, 64)).astype(float)
    bank = random_filter_bank(3, 5, seed=2)
    a = encode(_norm(tex), bank)
    b = encode(_norm(2 * tex.mean() - tex), bank)
    assert np.array_equal(a.planes, ~b.planes)


def test_bits_equal_sign_oracle():
    rng = np.random.default_rng(6)
    tex = rng.integers(0, 256, (16, 32)).astype(float)
    k = rng.normal(size=(3, 3))
    k -= k.mean()
    t = encode(_norm(tex), FilterBank(k[None]))
    assert np.array_equal(t.planes[0], correlate_wrap_cols(tex, k) > 0)


def test_mask_eroded_radially_only():
    mask = np.ones((20, 40), bool)
    mask[10, 5] = False
    t = encode(_norm(np.random.default_rng(0).random((20, 40)) * 255, mask), random_filter_bank(2, 5, 0))
    e = 3  # ceil(5 / 2)
    assert not t.mask[:e].any() and not t.mask[-e:].any()
    assert not t.mask[10 - e:10 + e + 1, 5].any()
    assert t.mask[10, 4] and t.mask[10, 6]
    assert np.array_equal(t.mask, erode_rows(mask, e))


def test_encode_empty_mask():
    with pytest.raises(EmptyMask) as err:
        encode(_norm(np.zeros((16, 64)), np.zeros((16, 64), bool)), random_filter_bank(2, 3, 0))
    assert err.value.stage == "encoding"


# matching

def test_identity_and_complement():
    t = random_template(1)
    assert match(t, t) == match(t, t).__class__(0.0, 0)
    # at delta = 0 every jointly valid bit disagrees
    assert match(t, complement(t), max_shift=0).score == 1.0


def test_shift_convention():
    a = random_template(2)
    b = IrisTemplate(np.roll(a.planes, 5, axis=2), np.roll(a.mask, 5, axis=1))
    r = match(a, b, 16)
    assert (r.score, r.best_shift) == (0.0, -5)
    assert match(b, a, 16).best_shift == 5


def test_mean_of_plane_fractions():
    rows, cols = 32, 64
    a = IrisTemplate(np.zeros((2, rows, cols), bool), np.ones((rows, cols), bool))
    b_planes = np.zeros((2, rows, cols), bool)
    b_planes[0, :, :16] = True   # plane 0 disagrees on 1/4 of the columns
    b_planes[1, :, :48] = True   # plane 1 disagrees on 3/4
    r = match(a, IrisTemplate(b_planes, a.mask.copy()), 0)
    assert r.score == 0.5


def test_matches_bitwise_oracle():
    a = random_template(7, n=2, rows=32, cols=48, density=0.85)
    b = random_template(8, n=2, rows=32, cols=48, density=0.85)
    b.planes[:, :, :] = np.roll(a.planes, 3, axis=2) ^ (np.random.default_rng(9).random(a.planes.shape) < 0.1)
    want = hamming_oracle(a.planes, a.mask, b.planes, b.mask, 4)
    got = match(a, b, 4)
    assert got.best_shift == want[1]
    assert got.score == pytest.approx(want[0], abs=1e-15)


def test_shape_mismatch_and_overlap():
    with pytest.raises(ShapeMismatch):
        match(random_template(1, rows=32), random_template(1, rows=40))
    sparse = random_template(3)
    sparse.mask[:] = False
    sparse.mask[:10, :10] = True
    with pytest.raises(InsufficientOverlap):
        match(sparse, sparse)


@given(templates, st.data())
def test_symmetry_and_range(a, data):
    seed = data.draw(st.integers(0, 2**32 - 1))
    b = random_template(seed, a.n, *a.mask.shape, density=0.9)
    ab, ba = match(a, b, 8), match(b, a, 8)
    assert ab.score == ba.score
    assert 0.0 <= ab.score <= 1.0
    assert match_many(a, [b], 8) == [ab]


@given(templates, st.integers(0, 2**32 - 1))
def test_masked_bits_do_not_matter(a, seed):
    rng = np.random.default_rng(seed)
    b = random_template(seed ^ 1, a.n, *a.mask.shape, density=0.9)
    # flip bits of a only where a's own mask is 0: excluded from every joint mask
    flip = (rng.random(a.planes.shape) < 0.5) & ~a.mask[None]
    a2 = IrisTemplate(a.planes ^ flip, a.mask)
    assert match(a2, b, 6) == match(a, b, 6)


# template files

def test_template_roundtrip(tmp_path):
    t = random_template(4, n=3, rows=5, cols=7, density=0.5)
    save_template(t, tmp_path / "t.itpl")
    assert load_template(tmp_path / "t.itpl") == t
    assert format_template(t).splitlines()[0] == "ITPL 1 3 5 7"


@pytest.mark.parametrize("mutate", [
    lambda L: ["ITPL 2" + L[0][6:]] + L[1:],
    lambda L: L[:3] + [L[3] + "0"] + L[4:],
    lambda L: L[:-1],
    lambda L: L[:2] + [L[2].replace("0", "2").replace("1", "2")] + L[3:],
    lambda L: ["BOGUS"] + L[1:],
])
def test_malformed_templates(mutate):
    lines = format_template(random_template(4, n=1, rows=3, cols=4)).splitlines()
    with pytest.raises(MalformedTemplateFile):
        parse_template("\n".join(mutate(lines)) + "\n")
