"""Image and volume comparison metrics."""

from __future__ import annotations

import numpy as np


def nsd(ref, test) -> float:
    """|test - ref|^2 / |ref|^2."""
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {test.shape}")
    denom = float(np.vdot(ref, ref))
    if denom == 0:
        raise ValueError("reference has zero norm")
    diff = test - ref
    return float(np.vdot(diff, diff)) / denom


def nrmse(ref, test) -> float:
    return float(np.sqrt(nsd(ref, test)))


def fwhm(profile, spacing: float = 1.0) -> float:
    """Full width at half maximum of a single-peaked 1D profile (linear interpolation)."""
    p = np.asarray(profile, dtype=np.float64)
    i = int(np.argmax(p))
    half = 0.5 * p[i]
    if half <= 0:
        raise ValueError("profile has no positive peak")
    lo = i
    while lo > 0 and p[lo - 1] > half:
        lo -= 1
    hi = i
    while hi < p.size - 1 and p[hi + 1] > half:
        hi += 1
    left = lo - (p[lo] - half) / (p[lo] - p[lo - 1]) if lo > 0 else lo - 0.5
    right = hi + (p[hi] - half) / (p[hi] - p[hi + 1]) if hi < p.size - 1 else hi + 0.5
    return float(right - left) * spacing


def line_profile(volume: np.ndarray, axis: str, through: tuple[int, int, int]) -> np.ndarray:
    """Line through voxel index (i_x, i_y, i_z) along ``axis`` of a (z, y, x) array."""
    ix, iy, iz = through
    if axis == "x":
        return volume[iz, iy, :]
    if axis == "y":
        return volume[iz, :, ix]
    if axis == "z":
        return volume[:, iy, ix]
    raise ValueError(f"unknown axis {axis!r}")
