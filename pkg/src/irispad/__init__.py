"""Iris recognition with photometric-stereo and texture-ensemble PAD."""

__version__ = "0.1.0"
