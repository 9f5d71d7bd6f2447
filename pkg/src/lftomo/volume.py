"""Voxel volumes and the slice-wise collapse to scene light fields.

Arrays are stored (n_z, n_y, n_x) with x fastest. Coordinates are centered on
the volume, so voxel i along an axis sits at ``(i - (n-1)/2) * delta``. Axis
z points away from the camera; slice s of a posed volume becomes the scene
plane at distance ``D_scene + z_s`` with (s, t) = (x, y).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lightfield import grid_centers, read_raw, write_raw


@dataclass(eq=False)
class VoxelVolume:
    data: np.ndarray                     # (n_z, n_y, n_x)
    delta: tuple[float, float, float]    # (dx, dy, dz) in mm

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError("volume data must be 3D (n_z, n_y, n_x)")
        self.delta = tuple(float(d) for d in self.delta)
        if len(self.delta) != 3 or min(self.delta) <= 0:
            raise ValueError("voxel spacings must be three positive numbers")

    @classmethod
    def zeros(cls, shape_xyz, delta) -> "VoxelVolume":
        nx, ny, nz = shape_xyz
        return cls(np.zeros((nz, ny, nx), np.float32), delta)

    @property
    def shape_xyz(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return nx, ny, nz

    def centers(self, axis: int) -> np.ndarray:
        """Voxel centers along coordinate axis 0=x, 1=y, 2=z."""
        return grid_centers(self.shape_xyz[axis], self.delta[axis])

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable (z, y, x) coordinate arrays."""
        return (self.centers(2)[:, None, None], self.centers(1)[None, :, None],
                self.centers(0)[None, None, :])

    @property
    def voxel_volume(self) -> float:
        return self.delta[0] * self.delta[1] * self.delta[2]


def save_volume(path, vol: VoxelVolume) -> None:
    nx, ny, nz = vol.shape_xyz
    meta = {"n_x": nx, "n_y": ny, "n_z": nz, "delta_x_mm": vol.delta[0],
            "delta_y_mm": vol.delta[1], "delta_z_mm": vol.delta[2]}
    write_raw(path, vol.data, meta)


def load_volume(path) -> VoxelVolume:
    data, m = read_raw(path)
    shape = (m["n_z"], m["n_y"], m["n_x"])
    if data.size != np.prod(shape):
        raise ValueError(f"{path}: {data.size} values, sidecar says {shape}")
    return VoxelVolume(data.reshape(shape), (m["delta_x_mm"], m["delta_y_mm"], m["delta_z_mm"]))


def slice_distances(vol: VoxelVolume, distance: float) -> np.ndarray:
    """Scene-plane distance of every slice center."""
    return distance + vol.centers(2)


def collapse_slice(vol: VoxelVolume, s: int, K: int | None = None) -> np.ndarray:
    """Scene coefficients of slice ``s``: dz * x^s for every view.

    Returns a (1, n_y, n_x) array shared by all views, or (K, n_y, n_x) when
    ``K`` is given.
    """
    n_z = vol.data.shape[0]
    if not 0 <= s < n_z:
        raise IndexError(f"slice {s} out of range for {n_z} slices")
    w = vol.delta[2] * np.asarray(vol.data[s], dtype=np.float64)[None]
    return w if K is None else np.repeat(w, K, axis=0)


def collapse_slice_adjoint(views: np.ndarray, dz: float) -> np.ndarray:
    """Accumulate (K, n_y, n_x) views back into one slice."""
    return dz * np.sum(views, axis=0)
