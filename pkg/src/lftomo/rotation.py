"""Volume rotation by a quarter-turn permutation, a rescale and three shears.

A rotation Theta (camera frame -> object frame) is factored as

    Theta = Q @ D @ S_z @ S_x @ S_y

with Q a signed axis permutation, D diagonal and

    S_z = [[1,0,0],[0,1,0],[a,b,1]]
    S_x = [[1,c,d],[0,1,0],[0,0,1]]
    S_y = [[1,0,0],[e,1,f],[0,0,1]].

``rotate_volume`` returns the coefficients of g(q) = f(Theta q): the
permutation relabels axes, D only changes the voxel sizes (to delta / D) and
each shear is an L2 projection along one axis whose 1D kernel is the density
of a sum of three uniforms (piecewise quadratic).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .transport import BlurSpec1D, filter_axis0
from .volume import VoxelVolume

_AXIS = {"x": 0, "y": 1, "z": 2}


def rotation_matrix(yaw_deg: float, pitch_deg: float, roll_deg: float) -> np.ndarray:
    """R_y(yaw) @ R_x(pitch) @ R_z(roll); y is the vertical axis, z the optical axis."""
    vals = (yaw_deg, pitch_deg, roll_deg)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"rotation angles must be finite, got {vals}")
    p, t, r = (math.radians(v) for v in vals)
    ry = np.array([[math.cos(p), 0, math.sin(p)], [0, 1, 0], [-math.sin(p), 0, math.cos(p)]])
    rx = np.array([[1, 0, 0], [0, math.cos(t), -math.sin(t)], [0, math.sin(t), math.cos(t)]])
    rz = np.array([[math.cos(r), -math.sin(r), 0], [math.sin(r), math.cos(r), 0], [0, 0, 1]])
    return ry @ rx @ rz


def rotation_angles(theta: np.ndarray) -> tuple[float, float, float]:
    """Inverse of ``rotation_matrix`` (degrees)."""
    pitch = -math.asin(max(-1.0, min(1.0, theta[1, 2])))
    yaw = math.atan2(theta[0, 2], theta[2, 2])
    roll = math.atan2(theta[1, 0], theta[1, 1])
    return tuple(math.degrees(v) for v in (yaw, pitch, roll))


def shear_matrices(coef: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    sz = np.array([[1, 0, 0], [0, 1, 0], [coef["a"], coef["b"], 1.0]])
    sx = np.array([[1, coef["c"], coef["d"]], [0, 1, 0], [0, 0, 1.0]])
    sy = np.array([[1, 0, 0], [coef["e"], 1, coef["f"]], [0, 0, 1.0]])
    return sz, sx, sy


def _quarter_turns() -> list[np.ndarray]:
    out = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            q = np.zeros((3, 3))
            for col, (row, sg) in enumerate(zip(perm, signs)):
                q[row, col] = sg
            if np.linalg.det(q) > 0:
                out.append(q)
    return out


def factor_residual(theta: np.ndarray) -> tuple[np.ndarray, dict]:
    """Closed-form D, shear coefficients with theta = D S_z S_x S_y."""
    dy = theta[1, 1]
    if abs(dy) < 1e-9:
        raise ValueError("residual rotation has a vanishing yy entry")
    e, f = theta[1, 0] / dy, theta[1, 2] / dy
    dx = theta[0, 0] - theta[0, 1] * e
    if abs(dx) < 1e-9:
        raise ValueError("residual rotation leaves no x scale")
    c = theta[0, 1] / dx
    d = theta[0, 2] / dx - c * f
    rx = np.array([1 + c * e, c, c * f + d])
    ry = np.array([e, 1.0, f])
    # row z = Dz * (e_z + a*rx + b*ry); the 3x3 system has unit determinant
    sol = np.linalg.solve(np.column_stack([[0, 0, 1.0], rx, ry]), theta[2])
    dz = sol[0]
    coef = {"a": sol[1] / dz, "b": sol[2] / dz, "c": c, "d": d, "e": e, "f": f}
    return np.array([dx, dy, dz]), coef


@dataclass(frozen=True, eq=False)
class RotationPlan:
    theta: np.ndarray        # full rotation, camera frame -> object frame
    permutation: np.ndarray  # signed quarter-turn Q
    diag: np.ndarray         # (Dx, Dy, Dz)
    shears: dict             # a, b (z-shear), c, d (x-shear), e, f (y-shear)
    residual_angles: tuple[float, float, float]

    def reconstruct(self) -> np.ndarray:
        sz, sx, sy = shear_matrices(self.shears)
        return self.permutation @ np.diag(self.diag) @ sz @ sx @ sy

    def error(self) -> float:
        return float(np.linalg.norm(self.reconstruct() - self.theta))

    @property
    def is_identity(self) -> bool:
        return (np.array_equal(self.permutation, np.eye(3)) and np.allclose(self.diag, 1, atol=0)
                and all(v == 0 for v in self.shears.values()))


def decompose_matrix(theta: np.ndarray) -> RotationPlan:
    theta = np.asarray(theta, dtype=np.float64)
    if not np.allclose(theta @ theta.T, np.eye(3), atol=1e-10) or np.linalg.det(theta) < 0:
        raise ValueError("not a proper rotation matrix")
    cands = sorted(_quarter_turns(), key=lambda q: -np.trace(q.T @ theta))
    for q in cands:
        res = q.T @ theta
        angles = rotation_angles(res)
        if max(abs(a) for a in angles) >= 45.0 + 1e-9:
            continue
        try:
            diag, coef = factor_residual(res)
        except (ValueError, np.linalg.LinAlgError):
            continue
        if np.any(diag <= 0):
            continue
        # snap roundoff so exact quarter turns give exactly zero shears
        coef = {k: (0.0 if abs(v) < 1e-15 else float(v)) for k, v in coef.items()}
        diag = np.where(np.abs(diag - 1) < 1e-15, 1.0, diag)
        return RotationPlan(theta, q, diag, coef, angles)
    raise ValueError(f"no shear decomposition found for rotation with angles "
                     f"{rotation_angles(theta)}")


def decompose_rotation(yaw: float, pitch: float, roll: float) -> RotationPlan:
    return decompose_matrix(rotation_matrix(yaw, pitch, roll))


# --- shears -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ShearOp:
    """q_axis -> q_axis + c1 * q_other1 + c2 * q_other2 on a fixed grid."""

    axis: str                              # "x", "y" or "z"
    coef: tuple[float, float]              # multipliers of the other two axes (in x, y, z order)
    shape_xyz: tuple[int, int, int]
    delta: tuple[float, float, float]

    def others(self) -> tuple[int, int]:
        a = _AXIS[self.axis]
        return tuple(i for i in range(3) if i != a)

    def spec(self) -> BlurSpec1D:
        a = _AXIS[self.axis]
        o1, o2 = self.others()
        c1 = _grid(self.shape_xyz[o1], self.delta[o1])
        c2 = _grid(self.shape_xyz[o2], self.delta[o2])
        # line order matches _lines(): the larger coordinate index varies slowest
        shift = (self.coef[0] * c1[None, :] + self.coef[1] * c2[:, None]).ravel()
        n = self.shape_xyz[a]
        return BlurSpec1D(alpha=1.0, shift=shift,
                          tau=(abs(self.coef[0]) * self.delta[o1], abs(self.coef[1]) * self.delta[o2]),
                          mass=1.0, src_n=n, src_spacing=self.delta[a], src_center=0.0,
                          dst_n=n, dst_spacing=self.delta[a], dst_center=0.0)


def _grid(n, d):
    return (np.arange(n) - (n - 1) / 2.0) * d


def _lines(data: np.ndarray, axis: int) -> np.ndarray:
    """(n_z, n_y, n_x) -> (B, n_axis, 1) lines, other axes flattened with the
    higher coordinate index slowest."""
    arr_axis = 2 - axis
    moved = np.moveaxis(data, arr_axis, -1)
    return moved.reshape(-1, moved.shape[-1])[:, :, None], moved.shape


def _unlines(lines: np.ndarray, moved_shape, axis: int) -> np.ndarray:
    return np.moveaxis(lines[:, :, 0].reshape(moved_shape), -1, 2 - axis)


def make_shear(axis: str, coef, shape_xyz, delta) -> ShearOp:
    return ShearOp(axis, (float(coef[0]), float(coef[1])), tuple(shape_xyz), tuple(delta))


def apply_shear(op: ShearOp, vol: VoxelVolume, direction: str = "forward") -> VoxelVolume:
    if vol.shape_xyz != op.shape_xyz:
        raise ValueError(f"volume shape {vol.shape_xyz} != shear grid {op.shape_xyz}")
    if not np.allclose(vol.delta, op.delta, rtol=1e-12, atol=0):
        raise ValueError("volume spacing does not match the shear grid")
    if op.coef == (0.0, 0.0):
        return VoxelVolume(np.array(vol.data, dtype=np.float64), vol.delta)
    spec = op.spec()
    if direction == "adjoint":
        spec = spec.transpose()
    elif direction != "forward":
        raise ValueError(f"unknown direction {direction!r}")
    axis = _AXIS[op.axis]
    lines, shape = _lines(np.asarray(vol.data, dtype=np.float64), axis)
    out = filter_axis0(spec, lines)
    return VoxelVolume(_unlines(out, shape, axis), vol.delta)


# --- full rotation ------------------------------------------------------------

def _perm_map(q: np.ndarray):
    """For each new coordinate c', the source coordinate and sign."""
    src = [int(np.flatnonzero(q[:, c])[0]) for c in range(3)]
    return src, [int(q[src[c], c]) for c in range(3)]


def permute_volume(q: np.ndarray, vol: VoxelVolume, direction: str = "forward") -> VoxelVolume:
    """g(q) = f(Q q) on centered grids (exact); adjoint is the inverse relabeling."""
    src, sign = _perm_map(q)
    data = np.asarray(vol.data)
    if direction == "forward":
        out = np.transpose(data, [2 - src[2 - n] for n in range(3)])
        for c in range(3):
            if sign[c] < 0:
                out = np.flip(out, axis=2 - c)
        delta = tuple(vol.delta[src[c]] for c in range(3))
        return VoxelVolume(np.ascontiguousarray(out), delta)
    if direction == "adjoint":
        out = data
        for c in range(3):
            if sign[c] < 0:
                out = np.flip(out, axis=2 - c)
        perm = [2 - src[2 - n] for n in range(3)]
        out = np.transpose(out, np.argsort(perm))
        delta = [0.0] * 3
        for c in range(3):
            delta[src[c]] = vol.delta[c]
        return VoxelVolume(np.ascontiguousarray(out), tuple(delta))
    raise ValueError(f"unknown direction {direction!r}")


def rotated_spacing(plan: RotationPlan, delta) -> tuple[float, float, float]:
    src, _ = _perm_map(plan.permutation)
    return tuple(delta[src[c]] / plan.diag[c] for c in range(3))


def rotation_shears(plan: RotationPlan, shape_xyz, delta) -> list[ShearOp]:
    """The three shears in application order (z, x, y) on the rescaled grid."""
    src, _ = _perm_map(plan.permutation)
    shape = tuple(shape_xyz[src[c]] for c in range(3))
    dr = rotated_spacing(plan, delta)
    s = plan.shears
    return [make_shear("z", (s["a"], s["b"]), shape, dr),
            make_shear("x", (s["c"], s["d"]), shape, dr),
            make_shear("y", (s["e"], s["f"]), shape, dr)]


def rotate_volume(plan: RotationPlan, vol: VoxelVolume, direction: str = "forward") -> VoxelVolume:
    if direction == "forward":
        shears = rotation_shears(plan, vol.shape_xyz, vol.delta)
        v = permute_volume(plan.permutation, vol)
        v = VoxelVolume(np.asarray(v.data, dtype=np.float64), shears[0].delta)
        for op in shears:
            v = apply_shear(op, v)
        return v
    if direction == "adjoint":
        v = VoxelVolume(np.asarray(vol.data, dtype=np.float64), vol.delta)
        src, _ = _perm_map(plan.permutation)
        # spacing before the rescale, in permuted order
        before = tuple(vol.delta[c] * plan.diag[c] for c in range(3))
        orig_delta = [0.0] * 3
        orig_shape = [0] * 3
        for c in range(3):
            orig_delta[src[c]] = before[c]
            orig_shape[src[c]] = vol.shape_xyz[c]
        shears = rotation_shears(plan, tuple(orig_shape), tuple(orig_delta))
        for op in reversed(shears):
            v = apply_shear(op, VoxelVolume(v.data, op.delta), "adjoint")
        v = VoxelVolume(v.data, before)
        return permute_volume(plan.permutation, v, "adjoint")
    raise ValueError(f"unknown direction {direction!r}")
