"""BSIF iris codes and rotation-compensated fractional Hamming distance."""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import (
    EmptyMask,
    EvenKernelSide,
    InsufficientOverlap,
    MalformedFilterFile,
    MalformedTemplateFile,
    ShapeMismatch,
)
from .imaging import correlate_bank, response_tolerance
from .normalization import MIN_COVERAGE, NormalizedIris

MIN_OVERLAP_BITS = 1024
DEFAULT_MAX_SHIFT = 16


@dataclass
class FilterBank:
    kernels: np.ndarray  # (n, s, s)

    @property
    def n(self) -> int:
        return self.kernels.shape[0]

    @property
    def s(self) -> int:
        return self.kernels.shape[1]


@dataclass
class IrisTemplate:
    planes: np.ndarray  # (n, rows, cols) bool
    mask: np.ndarray  # (rows, cols) bool

    @property
    def n(self) -> int:
        return self.planes.shape[0]

    @property
    def shape(self):
        return self.mask.shape

    def __eq__(self, other):
        if not isinstance(other, IrisTemplate):
            return NotImplemented
        return (self.planes.shape == other.planes.shape
                and np.array_equal(self.planes, other.planes)
                and np.array_equal(self.mask, other.mask))


@dataclass(frozen=True)
class MatchScore:
    score: float
    best_shift: int


# ---------------------------------------------------------------------------
# filter banks


def parse_filter_bank(text: str) -> FilterBank:
    tokens = text.split()
    if len(tokens) < 3 or tokens[0] != "BSIF":
        raise MalformedFilterFile("filter file must start with 'BSIF <n> <s>'")
    try:
        n, s = int(tokens[1]), int(tokens[2])
    except ValueError:
        raise MalformedFilterFile("non-integer filter count or side") from None
    if n < 1 or s < 1:
        raise MalformedFilterFile(f"bad filter count/side {n} {s}")
    if s % 2 == 0:
        raise EvenKernelSide(f"kernel side {s} is even")
    values = tokens[3:]
    if len(values) != n * s * s:
        raise MalformedFilterFile(f"expected {n * s * s} coefficients, found {len(values)}")
    try:
        kernels = np.array([float(v) for v in values]).reshape(n, s, s)
    except ValueError:
        raise MalformedFilterFile("non-numeric coefficient") from None
    if not np.all(np.isfinite(kernels)):
        raise MalformedFilterFile("non-finite coefficient")
    kernels = kernels - kernels.mean(axis=(1, 2), keepdims=True)
    if np.any(np.abs(kernels.sum(axis=(1, 2))) >= 1e-6):
        raise MalformedFilterFile("kernel is not zero-mean after centering")
    return FilterBank(kernels)


def load_filter_bank(path) -> FilterBank:
    try:
        with open(path) as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise MalformedFilterFile(f"{path}: {exc}") from exc
    return parse_filter_bank(text)


def format_filter_bank(bank: FilterBank) -> str:
    lines = [f"BSIF {bank.n} {bank.s}"]
    for k in bank.kernels:
        for row in k:
            lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def save_filter_bank(bank: FilterBank, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_filter_bank(bank))


def random_filter_bank(n: int, s: int, seed: int) -> FilterBank:
    """Seeded stand-in for learned BSIF filters.

    White noise is low-passed and windowed (so the filters see texture rather
    than pixel noise), made zero-mean, then orthonormalized.
    """
    from scipy.ndimage import gaussian_filter

    if s % 2 == 0:
        raise EvenKernelSide(f"kernel side {s} is even")
    if n > s * s - 1:
        raise ValueError(f"cannot orthonormalize {n} zero-mean {s}x{s} filters")
    rng = np.random.default_rng(seed)
    c = np.arange(s) - s // 2
    window = np.exp(-(c[:, None] ** 2 + c[None, :] ** 2) / (2 * (s / 3.0) ** 2))
    raw = []
    for _ in range(n):
        k = gaussian_filter(rng.standard_normal((s, s)), sigma=max(s / 8.0, 0.5), mode="wrap")
        k *= window
        raw.append((k - k.mean()).ravel())
    q, _ = np.linalg.qr(np.array(raw).T)
    kernels = q.T.reshape(n, s, s)
    kernels -= kernels.mean(axis=(1, 2), keepdims=True)
    return FilterBank(kernels)


def default_bank_path(name: str = "recognition_8x9x9.bsif"):
    return resources.files("irispad") / "data" / name


def default_recognition_bank() -> FilterBank:
    return load_filter_bank(default_bank_path())


# ---------------------------------------------------------------------------
# encoding


def binarize_responses(responses: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Bit = 1 iff the response is positive; sub-tolerance magnitudes count as 0."""
    tol = response_tolerance(kernels)
    return responses > tol[:, None, None]


def encode(norm: NormalizedIris, bank: FilterBank) -> IrisTemplate:
    """BSIF-code a polar raster.

    Angles wrap around during filtering; the mask is eroded radially by
    ``ceil(s/2)`` rows so no valid bit sees texture outside the annulus.
    """
    mask = np.asarray(norm.mask, dtype=bool)
    if mask.sum() < MIN_COVERAGE * mask.size:
        raise EmptyMask("normalized mask covers less than 5% of the raster", stage="encoding")
    responses = correlate_bank(norm.pixels, bank.kernels, wrap_cols=True)
    planes = binarize_responses(responses, bank.kernels)
    return IrisTemplate(planes=planes, mask=erode_rows(mask, math.ceil(bank.s / 2)))


def erode_rows(mask: np.ndarray, e: int) -> np.ndarray:
    """Keep a position only if every row within ``e`` of it (same column) is valid."""
    rows = mask.shape[0]
    padded = np.zeros((rows + 2 * e, mask.shape[1]), dtype=bool)
    padded[e:e + rows] = mask
    out = np.ones_like(mask)
    for d in range(2 * e + 1):
        out &= padded[d:d + rows]
    return out


# ---------------------------------------------------------------------------
# matching


def shift_order(max_shift: int):
    """0, -1, +1, -2, +2, ...: the tie-breaking order for equal scores."""
    yield 0
    for k in range(1, max_shift + 1):
        yield -k
        yield k


def _pack(bits: np.ndarray) -> np.ndarray:
    """Pack the last (column) axis, least significant bit first."""
    return np.packbits(bits, axis=-1, bitorder="little")


def _roll_packed(packed: np.ndarray, delta: int) -> np.ndarray:
    """Circularly shift packed rows right by ``delta`` bits (columns % 8 == 0)."""
    nbits = packed.shape[-1] * 8
    q, r = divmod(delta % nbits, 8)
    lo = np.roll(packed, q, axis=-1)
    if r == 0:
        return lo
    hi = np.roll(packed, q + 1, axis=-1)
    return (lo << np.uint8(r)) | (hi >> np.uint8(8 - r))


def _shifted(bits: np.ndarray, packed: np.ndarray, delta: int) -> np.ndarray:
    if bits.shape[-1] % 8 == 0:
        return _roll_packed(packed, delta)
    return _pack(np.roll(bits, delta, axis=-1))


def _shift_stack(t: IrisTemplate, deltas) -> tuple:
    """Packed planes and masks of ``t`` rolled by every shift in ``deltas``."""
    pp, pm = _pack(t.planes), _pack(t.mask)
    planes = np.stack([_shifted(t.planes, pp, d) for d in deltas])
    masks = np.stack([_shifted(t.mask, pm, d) for d in deltas])
    return planes, masks


def _best_shift(planes, mask, planes_stack, mask_stack, deltas) -> MatchScore:
    s, n = planes_stack.shape[:2]
    joint = mask[None] & mask_stack
    totals = np.bitwise_count(joint).reshape(s, -1).sum(axis=1, dtype=np.int64)
    diff = (planes[None] ^ planes_stack) & joint[:, None]
    counts = np.bitwise_count(diff).reshape(s, n, -1).sum(axis=2, dtype=np.int64)
    best = None
    for i, delta in enumerate(deltas):
        if totals[i] < MIN_OVERLAP_BITS:
            continue
        score = float(np.mean(counts[i] / totals[i]))
        if best is None or score < best.score:
            best = MatchScore(score, int(delta))
    if best is None:
        raise InsufficientOverlap(f"fewer than {MIN_OVERLAP_BITS} jointly valid bits at every shift")
    return best


def _check_pair(a: IrisTemplate, b: IrisTemplate, max_shift: int) -> None:
    if a.planes.shape != b.planes.shape or a.mask.shape != b.mask.shape:
        raise ShapeMismatch(f"{a.planes.shape} vs {b.planes.shape}")
    if max_shift < 0:
        raise ValueError("max_shift must be non-negative")


def match(a: IrisTemplate, b: IrisTemplate, max_shift: int = DEFAULT_MAX_SHIFT) -> MatchScore:
    """Mean fractional Hamming distance, minimized over circular column shifts.

    A positive shift moves ``b`` to the right before comparison, so if ``b``
    is ``a`` rolled right by 5 columns the best shift is -5. All planes share
    a single shift; shifts leaving fewer than 1024 jointly valid bits are
    skipped.
    """
    _check_pair(a, b, max_shift)
    deltas = list(shift_order(max_shift))
    pb, mb = _shift_stack(b, deltas)
    return _best_shift(_pack(a.planes), _pack(a.mask), pb, mb, deltas)


def match_many(probe: IrisTemplate, gallery, max_shift: int = DEFAULT_MAX_SHIFT) -> list:
    """``[match(probe, g) for g in gallery]``, rolling the probe only once.

    Comparing ``probe`` rolled by ``-delta`` against ``g`` counts exactly the
    same bits as ``probe`` against ``g`` rolled by ``delta``.
    """
    deltas = list(shift_order(max_shift))
    pa, ma = _shift_stack(probe, [-d for d in deltas])
    out = []
    for g in gallery:
        _check_pair(probe, g, max_shift)
        out.append(_best_shift(_pack(g.planes), _pack(g.mask), pa, ma, deltas))
    return out


def complement(t: IrisTemplate) -> IrisTemplate:
    return IrisTemplate(planes=~t.planes, mask=t.mask.copy())


# ---------------------------------------------------------------------------
# template files


def format_template(t: IrisTemplate) -> str:
    n, rows, cols = t.planes.shape
    out = [f"ITPL 1 {n} {rows} {cols}"]
    for block in list(t.planes) + [t.mask]:
        for row in block:
            out.append("".join("1" if v else "0" for v in row))
    return "\n".join(out) + "\n"


def parse_template(text: str) -> IrisTemplate:
    lines = text.splitlines()
    if not lines:
        raise MalformedTemplateFile("empty template file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "ITPL":
        raise MalformedTemplateFile("header must be 'ITPL 1 <n> <rows> <cols>'")
    if head[1] != "1":
        raise MalformedTemplateFile(f"unknown template version {head[1]}")
    try:
        n, rows, cols = (int(v) for v in head[2:])
    except ValueError:
        raise MalformedTemplateFile("non-integer header field") from None
    if n < 1 or rows < 1 or cols < 1:
        raise MalformedTemplateFile("non-positive header field")
    body = lines[1:]
    if len(body) != (n + 1) * rows:
        raise MalformedTemplateFile(f"expected {(n + 1) * rows} rows, found {len(body)}")
    bits = np.empty((n + 1) * rows * cols, dtype=bool)
    for i, line in enumerate(body):
        if len(line) != cols or line.strip("01"):
            raise MalformedTemplateFile(f"line {i + 2}: expected {cols} characters from {{0,1}}")
        bits[i * cols:(i + 1) * cols] = np.frombuffer(line.encode("ascii"), dtype=np.uint8) == ord("1")
    bits = bits.reshape(n + 1, rows, cols)
    return IrisTemplate(planes=bits[:n].copy(), mask=bits[n].copy())


def save_template(t: IrisTemplate, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_template(t))


def load_template(path) -> IrisTemplate:
    try:
        with open(path) as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise MalformedTemplateFile(f"{path}: {exc}") from exc
    return parse_template(text)
