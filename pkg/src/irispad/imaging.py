"""Raster helpers: binary PGM I/O, center cropping and kernel correlation.

Images are plain ``numpy`` arrays of shape ``(height, width)`` and dtype
``uint8``; masks are boolean arrays of the same shape.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage, signal

from .errors import CropTooLarge, EvenKernel, IoFailure, MalformedHeader, TruncatedPayload

_WHITESPACE = b" \t\r\n\v\f"


def as_image(pixels) -> np.ndarray:
    """Validate and coerce ``pixels`` to a 2-D uint8 raster."""
    arr = np.asarray(pixels)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D raster, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255):
            raise ValueError("pixel values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def _header_tokens(data: bytes, count: int):
    """Return ``count`` header tokens and the offset just past the last one."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos] in _WHITESPACE:
            pos += 1
        if pos < n and data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
            continue
        if pos >= n:
            raise MalformedHeader("header ended early")
        start = pos
        while pos < n and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if data[:2] != b"P5" or len(data) < 3 or data[2] not in _WHITESPACE + b"#":
        raise MalformedHeader(f"{path}: magic number is not P5")
    tokens, pos = _header_tokens(data[2:], 3)
    pos += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedHeader(f"{path}: non-numeric header field") from None
    if width < 1 or height < 1:
        raise MalformedHeader(f"{path}: bad dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise MalformedHeader(f"{path}: maxval {maxval} not in 1..255")
    # exactly one whitespace byte separates the header from the payload
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise TruncatedPayload(f"{path}: missing payload")
    pos += 1
    need = width * height
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise TruncatedPayload(f"{path}: expected {need} bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(img, path) -> None:
    img = as_image(img)
    h, w = img.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(np.ascontiguousarray(img).tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_mask(path) -> np.ndarray:
    """Read a mask PGM (0 = excluded, 255 = valid), binarized at 128."""
    return read_pgm(path) >= 128


def write_mask(mask, path) -> None:
    write_pgm(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), path)


def center_crop(img, w: int, h: int) -> np.ndarray:
    """Cut the ``w`` x ``h`` window at the image center.

    When the margin is odd the extra pixel stays on the right/bottom side.
    """
    img = np.asarray(img)
    height, width = img.shape[:2]
    if w > width or h > height or w < 1 or h < 1:
        raise CropTooLarge(f"cannot crop {w}x{h} from {width}x{height}")
    x0 = (width - w) // 2
    y0 = (height - h) // 2
    return img[y0:y0 + h, x0:x0 + w].copy()


def convolve_zero_mean(img, kernel) -> np.ndarray:
    """Correlate ``img`` with a centered odd-sided kernel.

    The output has the input's shape; borders use nearest-pixel replication.
    Despite the name any kernel is accepted, zero-mean ones being the BSIF
    use case.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
        raise EvenKernel(f"kernel must be square with odd side, got {kernel.shape}")
    return ndimage.correlate(np.asarray(img, dtype=np.float64), kernel, mode="nearest")


def correlate_bank(img, kernels, wrap_cols: bool = False) -> np.ndarray:
    """Correlate ``img`` with a stack of ``(n, s, s)`` kernels at once.

    Rows are always edge-replicated; columns wrap around when ``wrap_cols``
    is set (polar rasters are periodic in angle). Uses FFT correlation, so
    results agree with :func:`convolve_zero_mean` to round-off only.
    """
    kernels = np.asarray(kernels, dtype=np.float64)
    if kernels.ndim != 3 or kernels.shape[1] != kernels.shape[2] or kernels.shape[1] % 2 == 0:
        raise EvenKernel(f"kernel stack must be (n, s, s) with odd s, got {kernels.shape}")
    r = kernels.shape[1] // 2
    img = np.asarray(img, dtype=np.float64)
    padded = np.pad(img, ((r, r), (0, 0)), mode="edge")
    padded = np.pad(padded, ((0, 0), (r, r)), mode="wrap" if wrap_cols else "edge")
    flipped = kernels[:, ::-1, ::-1]
    if kernels.shape[1] <= 5:
        out = np.stack([signal.correlate(padded, k, mode="valid", method="direct") for k in kernels])
    else:
        out = signal.fftconvolve(padded[None, :, :], flipped, mode="valid", axes=(1, 2))
    return out


def response_tolerance(kernels) -> np.ndarray:
    """Per-kernel magnitude below which a response counts as an exact zero.

    Zero-mean kernels rarely sum to exactly 0.0 in floating point, so flat
    regions would otherwise produce sign noise.
    """
    kernels = np.asarray(kernels, dtype=np.float64)
    return 1e-9 * 255.0 * np.abs(kernels).reshape(len(kernels), -1).sum(axis=1)

