"""False-color phase images: hue from phase, brightness from intensity.

The mapping is fixed so outputs are reproducible bit for bit:

* hue ``h = phase / pi`` in [0, 1), saturation 1;
* value ``v = clip(intensity / scale, 0, 1)``, where ``scale`` defaults to the
  99th percentile of the finite intensities (1 if that is not positive);
* RGB follows the standard six-sector HSV formula with ``i = floor(6h) mod 6``
  and ``f = 6h - floor(6h)``;
* 8-bit output is ``floor(255 * c + 0.5)``; NaN pixels are black.
"""

from __future__ import annotations

import numpy as np


def auto_scale(intensity) -> float:
    finite = np.asarray(intensity)[np.isfinite(intensity)]
    if finite.size == 0:
        return 1.0
    s = float(np.percentile(finite, 99))
    return s if s > 0 else 1.0


def hsv_to_rgb(h, s, v) -> np.ndarray:
    h, s, v = np.broadcast_arrays(np.asarray(h, float), np.asarray(s, float), np.asarray(v, float))
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    i = i.astype(np.int64) % 6
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def phase_to_rgb(phase, intensity, scale=None) -> np.ndarray:
    """Float RGB image in [0, 1] for a phase map modulated by an intensity map."""
    phase = np.asarray(phase, dtype=np.float64)
    intensity = np.asarray(intensity, dtype=np.float64)
    if scale is None:
        scale = auto_scale(intensity)
    bad = ~(np.isfinite(phase) & np.isfinite(intensity))
    hue = np.mod(np.where(bad, 0.0, phase) / np.pi, 1.0)
    value = np.clip(np.where(bad, 0.0, intensity) / scale, 0.0, 1.0)
    return hsv_to_rgb(hue, 1.0, value)


def to_uint8(rgb) -> np.ndarray:
    return np.floor(255.0 * np.clip(rgb, 0.0, 1.0) + 0.5).astype(np.uint8)
