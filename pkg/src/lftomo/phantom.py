"""Parametric phantoms rasterized onto voxel grids.

Shapes are given in mm in centered volume coordinates (x, y, z), y vertical.
Rasterization averages an s^3 sub-voxel indicator (s = ``supersample``).
Separate shapes add; the parts of a compound shape are unioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .volume import VoxelVolume


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    intensity: float = 1.0

    def inside(self, x, y, z):
        c = self.center
        return (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2 <= self.radius ** 2

    def bounds(self):
        c, r = np.asarray(self.center, float), self.radius
        return c - r, c + r


@dataclass(frozen=True)
class Cylinder:
    """Solid capsule-free cylinder around the segment p0 -> p1."""

    p0: tuple[float, float, float]
    p1: tuple[float, float, float]
    radius: float
    intensity: float = 1.0

    def inside(self, x, y, z):
        p0 = np.asarray(self.p0, float)
        axis = np.asarray(self.p1, float) - p0
        length2 = float(axis @ axis)
        rx, ry, rz = x - p0[0], y - p0[1], z - p0[2]
        tpar = (rx * axis[0] + ry * axis[1] + rz * axis[2]) / length2
        d2 = rx ** 2 + ry ** 2 + rz ** 2 - tpar ** 2 * length2
        return (tpar >= 0) & (tpar <= 1) & (d2 <= self.radius ** 2)

    def bounds(self):
        pts = np.array([self.p0, self.p1], float)
        return pts.min(0) - self.radius, pts.max(0) + self.radius


@dataclass(frozen=True)
class Pronged:
    """A vertical stem, a hub sphere and n prongs rising at 45 degrees."""

    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    hub_radius: float = 2.0
    prong_radius: float = 1.0
    prong_length: float = 5.0
    stem_length: float = 6.0
    n_prongs: int = 4
    intensity: float = 1.0

    def parts(self):
        c = np.asarray(self.center, float)
        parts = [Sphere(tuple(c), self.hub_radius),
                 Cylinder(tuple(c), tuple(c - [0, self.stem_length, 0]), self.prong_radius)]
        for i in range(self.n_prongs):
            phi = 2 * math.pi * i / self.n_prongs
            direction = np.array([math.cos(phi), 1.0, math.sin(phi)]) / math.sqrt(2)
            parts.append(Cylinder(tuple(c), tuple(c + self.prong_length * direction),
                                  self.prong_radius))
        return parts

    def inside(self, x, y, z):
        out = np.zeros(np.broadcast(x, y, z).shape, dtype=bool)
        for p in self.parts():
            out |= p.inside(x, y, z)
        return out

    def bounds(self):
        lo, hi = zip(*(p.bounds() for p in self.parts()))
        return np.min(lo, axis=0), np.max(hi, axis=0)


SHAPES = {"sphere": Sphere, "cylinder": Cylinder, "pronged": Pronged}


@dataclass
class PhantomSpec:
    shapes: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        shapes = []
        for s in d.get("shapes", []):
            s = dict(s)
            kind = s.pop("kind")
            if kind not in SHAPES:
                raise ValueError(f"unknown shape kind {kind!r}")
            for key in ("center", "p0", "p1"):
                if key in s:
                    s[key] = tuple(float(v) for v in s[key])
            shapes.append(SHAPES[kind](**s))
        return cls(shapes)


def rasterize(spec: PhantomSpec, shape_xyz, delta, supersample: int = 2) -> VoxelVolume:
    vol = VoxelVolume.zeros(shape_xyz, delta)
    half = 0.5 * np.asarray(vol.shape_xyz) * np.asarray(vol.delta)
    for shape in spec.shapes:
        lo, hi = shape.bounds()
        if np.any(lo < -half - 1e-9) or np.any(hi > half + 1e-9):
            raise ValueError(f"{type(shape).__name__} extends outside the volume "
                             f"(bounds {lo}..{hi}, volume +-{half})")
    if not spec.shapes:
        return vol
    s = supersample
    sub = [(np.arange(s) - (s - 1) / 2.0) / s * d for d in vol.delta]
    z, y, x = vol.coords()
    acc = np.zeros(vol.data.shape)
    for shape in spec.shapes:
        hits = np.zeros(vol.data.shape)
        for oz in sub[2]:
            for oy in sub[1]:
                for ox in sub[0]:
                    hits += shape.inside(x + ox, y + oy, z + oz)
        acc += shape.intensity * hits / s ** 3
    vol.data = acc.astype(np.float32)
    return vol


def pronged_phantom(shape_xyz=(32, 32, 32), delta=(0.5, 0.5, 0.5), supersample: int = 2) -> VoxelVolume:
    """Default phantom scaled to fill the middle of the grid."""
    extent = min(n * d for n, d in zip(shape_xyz, delta))
    u = extent / 16.0
    spec = PhantomSpec([Pronged(center=hub_center(shape_xyz, delta), hub_radius=1.6 * u,
                                prong_radius=0.9 * u, prong_length=5.0 * u,
                                stem_length=6.0 * u)])
    return rasterize(spec, shape_xyz, delta, supersample)


def hub_index(shape_xyz) -> tuple[int, int, int]:
    """Voxel (i_x, i_y, i_z) holding the pronged phantom's hub center."""
    nx, ny, nz = shape_xyz
    return nx // 2, ny // 2 + 1, nz // 2


def hub_center(shape_xyz, delta) -> tuple[float, float, float]:
    return tuple(float((i - (n - 1) / 2.0) * d)
                 for i, n, d in zip(hub_index(shape_xyz), shape_xyz, delta))


def gaussian_blob(shape_xyz, delta, sigma, center=(0.0, 0.0, 0.0), theta=None) -> np.ndarray:
    """exp(-|(theta q - center) / sigma|^2 / 2) sampled at voxel centers q."""
    vol = VoxelVolume.zeros(shape_xyz, delta)
    z, y, x = vol.coords()
    q = np.stack(np.broadcast_arrays(x, y, z), axis=-1)
    p = q if theta is None else q @ np.asarray(theta).T
    r = (p - np.asarray(center, float)) / np.asarray(sigma, float)
    return np.exp(-0.5 * np.sum(r * r, axis=-1))
