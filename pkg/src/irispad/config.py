"""Pipeline configuration: a flat ``key = value`` file plus command-line overrides.

Blank lines and lines starting with ``#`` are ignored. Recognized keys::

    rows = 64                 # normalized raster height
    cols = 512                # normalized raster width
    filter_bank = path.bsif   # recognition bank; empty means the bundled one
    max_shift = 16
    match_threshold = 0.35    # verify: score <= threshold is a match
    pad_scales = 8x5,8x9,8x13,8x17
    pad_bank_dir = dir        # where pad_NxSxS.bsif files live; empty = bundled
    roi = 300
    tau3 = 0.01
    theta = 20                # LED half-angle in degrees
    model = path.ens          # trained 2D PAD ensemble
    workers = 1
    pupil_radius = 20,70
    iris_radius = 80,160

Relative paths are resolved against the config file's directory.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .encoding import DEFAULT_MAX_SHIFT, FilterBank, default_recognition_bank, load_filter_bank
from .errors import ConfigError, MalformedFilterFile, MalformedModelFile
from .pad2d import DEFAULT_ROI, DEFAULT_SCALES, Ensemble, load_ensemble, resolve_banks
from .pad3d import DEFAULT_HALF_ANGLE, DEFAULT_TAU3, IlluminationGeometry
from .segmentation import SegmentConfig


def _int_pair(text: str) -> tuple:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'lo,hi', got {text!r}")
    return int(parts[0]), int(parts[1])


def parse_scales(text: str) -> tuple:
    """``"8x5,8x9"`` -> ``((8, 5), (8, 9))``."""
    out = []
    for item in text.split(","):
        n, _, s = item.strip().lower().partition("x")
        out.append((int(n), int(s)))
    if not out:
        raise ValueError("no PAD scales given")
    return tuple(out)


def format_scales(scales) -> str:
    return ",".join(f"{n}x{s}" for n, s in scales)


def _path(text: str):
    return Path(text) if text else None


_PARSERS = {
    "rows": int,
    "cols": int,
    "filter_bank": _path,
    "max_shift": int,
    "match_threshold": float,
    "pad_scales": parse_scales,
    "pad_bank_dir": _path,
    "roi": int,
    "tau3": float,
    "theta": float,
    "model": _path,
    "workers": int,
    "pupil_radius": _int_pair,
    "iris_radius": _int_pair,
}
_PATH_KEYS = ("filter_bank", "pad_bank_dir", "model")


@dataclass(frozen=True)
class PipelineConfig:
    rows: int = 64
    cols: int = 512
    filter_bank: Path | None = None
    max_shift: int = DEFAULT_MAX_SHIFT
    match_threshold: float = 0.35
    pad_scales: tuple = DEFAULT_SCALES
    pad_bank_dir: Path | None = None
    roi: int = DEFAULT_ROI
    tau3: float = DEFAULT_TAU3
    theta: float = DEFAULT_HALF_ANGLE
    model: Path | None = None
    workers: int = 1
    pupil_radius: tuple = (20, 70)
    iris_radius: tuple = (80, 160)

    def validate(self) -> None:
        """Check numeric ranges and that every referenced file exists."""
        if self.rows < 2 or self.cols < 8:
            raise ConfigError(f"normalized size {self.rows}x{self.cols} too small")
        if self.max_shift < 0:
            raise ConfigError("max_shift must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.roi < 1:
            raise ConfigError("roi must be >= 1")
        if not 0.0 < self.theta < 90.0:
            raise ConfigError("theta must lie strictly between 0 and 90 degrees")
        if self.filter_bank is not None and not self.filter_bank.is_file():
            raise MalformedFilterFile(f"filter bank {self.filter_bank} not found")
        if self.model is not None and not self.model.is_file():
            raise MalformedModelFile(f"model {self.model} not found")
        if self.pad_bank_dir is not None and not self.pad_bank_dir.is_dir():
            raise ConfigError(f"PAD bank directory {self.pad_bank_dir} not found")

    def with_overrides(self, **values) -> "PipelineConfig":
        """Apply overrides, skipping ``None``; strings go through the file parsers."""
        known = {f.name for f in fields(self)}
        clean = {}
        for key, value in values.items():
            if value is None:
                continue
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            clean[key] = _PARSERS[key](value) if isinstance(value, str) else value
        return replace(self, **clean)

    # loaded resources

    def recognition_bank(self) -> FilterBank:
        if self.filter_bank is None:
            return default_recognition_bank()
        return load_filter_bank(self.filter_bank)

    def pad_banks(self) -> list:
        return resolve_banks(self.pad_scales, self.pad_bank_dir)

    def ensemble(self) -> Ensemble:
        if self.model is None:
            raise MalformedModelFile("no 2D PAD model configured (set 'model')")
        return load_ensemble(self.model)

    def geometry(self) -> IlluminationGeometry:
        return IlluminationGeometry.symmetric(self.theta)

    def segment_config(self) -> SegmentConfig:
        return SegmentConfig(pupil_radius=self.pupil_radius, iris_radius=self.iris_radius)


def parse_config(text: str, base_dir=None) -> PipelineConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in _PARSERS:
            raise ConfigError(f"line {lineno}: expected a known 'key = value', got {raw!r}")
        try:
            parsed = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
        if key in _PATH_KEYS and parsed is not None and base_dir is not None and not parsed.is_absolute():
            parsed = Path(base_dir) / parsed
        values[key] = parsed
    return PipelineConfig(**values)


def load_config(path=None, **overrides) -> PipelineConfig:
    """Read ``path`` (or start from defaults), apply overrides and validate."""
    if path is None:
        cfg = PipelineConfig()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = parse_config(text, Path(path).parent)
    try:
        cfg = cfg.with_overrides(**overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def format_config(cfg: PipelineConfig) -> str:
    def show(key, value):
        if value is None:
            return ""
        if key == "pad_scales":
            return format_scales(value)
        if isinstance(value, tuple):
            return ",".join(str(v) for v in value)
        return str(value)

    return "".join(f"{f.name} = {show(f.name, getattr(cfg, f.name))}\n" for f in fields(cfg))
