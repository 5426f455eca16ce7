"""sRGB to CIELAB conversion (D65 reference white, 2-degree observer).

Implemented once here and used by every LAB metric; inputs are float arrays of
shape (..., 3) with sRGB values in [0, 1].
"""

from __future__ import annotations

import numpy as np

# sRGB -> XYZ (linear light), D65
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE_D65 = np.array([0.95047, 1.00000, 1.08883])

_DELTA = 6.0 / 29.0


def srgb_linearize(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert sRGB in [0, 1] to CIELAB; last axis must be the 3 channels."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise ValueError(f"expected trailing channel axis of size 3, got shape {rgb.shape}")
    xyz = srgb_linearize(rgb) @ _RGB_TO_XYZ.T
    f = _lab_f(xyz / _WHITE_D65)
    lightness = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([lightness, a, b], axis=-1)
