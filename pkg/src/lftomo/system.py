"""End-to-end per-camera system operator: rotate, collapse slices, camera."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraConfig, build_camera, scene_plane
from .rotation import RotationPlan, decompose_rotation, rotate_volume, rotated_spacing
from .volume import VoxelVolume, collapse_slice, slice_distances


@dataclass(eq=False)
class SystemOperator:
    cfg: CameraConfig
    shape_xyz: tuple[int, int, int]
    delta: tuple[float, float, float]
    plan: RotationPlan
    rot_shape_xyz: tuple[int, int, int]
    rot_delta: tuple[float, float, float]
    chain: object

    @property
    def K(self) -> int:
        return self.chain.angular.K

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.chain.image_shape

    @property
    def volume_shape(self) -> tuple[int, int, int]:
        nx, ny, nz = self.shape_xyz
        return (nz, ny, nx)

    @property
    def radiometric_scale(self) -> float:
        """Factor making images comparable across angular discretizations.

        Scene coefficients are replicated per view, so the raw image grows
        with the view count; scaled images integrate the irradiance instead.
        """
        return self.chain.radiometric_scale

    def _rotate(self, x: np.ndarray) -> VoxelVolume:
        vol = VoxelVolume(np.asarray(x, dtype=np.float64), self.delta)
        if self.plan.is_identity:
            return vol
        return rotate_volume(self.plan, vol)

    def forward(self, x: np.ndarray, ks=None) -> np.ndarray:
        """Image (n_t, n_s) from volume coefficients (n_z, n_y, n_x)."""
        x = np.asarray(x)
        if x.shape != self.volume_shape:
            raise ValueError(f"volume shape {x.shape} != {self.volume_shape}")
        vol = self._rotate(x)
        scene = [collapse_slice(vol, s) for s in range(vol.data.shape[0])]
        return self.chain.forward_views(scene, ks)

    def adjoint(self, image: np.ndarray, ks=None) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        if image.shape != self.image_shape:
            raise ValueError(f"image shape {image.shape} != {self.image_shape}")
        views = self.chain.adjoint_views(image, ks)
        dz = self.rot_delta[2]
        rot = np.stack([dz * v.sum(axis=0) for v in views])
        if self.plan.is_identity:
            return rot
        return rotate_volume(self.plan, VoxelVolume(rot, self.rot_delta), "adjoint").data


def build_system(cfg: CameraConfig, shape_xyz, delta, plan: RotationPlan | None = None) -> SystemOperator:
    shape_xyz = tuple(int(n) for n in shape_xyz)
    delta = tuple(float(d) for d in delta)
    if plan is None:
        plan = decompose_rotation(cfg.pose.yaw_deg, cfg.pose.pitch_deg, cfg.pose.roll_deg)
    if plan.is_identity:
        rot_shape, rot_delta = shape_xyz, delta
    else:
        src = [int(np.flatnonzero(plan.permutation[:, c])[0]) for c in range(3)]
        rot_shape = tuple(shape_xyz[src[c]] for c in range(3))
        rot_delta = rotated_spacing(plan, delta)
    nx, ny, nz = rot_shape
    probe = VoxelVolume.zeros(rot_shape, rot_delta)
    planes = [scene_plane(nx, ny, rot_delta[0], rot_delta[1], float(d), cfg.focal_main_mm)
              for d in slice_distances(probe, cfg.pose.distance_mm)]
    chain = build_camera(cfg, planes)
    return SystemOperator(cfg, shape_xyz, delta, plan, rot_shape, rot_delta, chain)


def system_apply(op: SystemOperator, data: np.ndarray, direction: str = "forward") -> np.ndarray:
    if direction == "forward":
        return op.forward(data).astype(np.float32)
    if direction == "adjoint":
        return op.adjoint(data).astype(np.float32)
    raise ValueError(f"unknown direction {direction!r}")
