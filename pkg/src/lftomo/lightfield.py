"""Discrete light fields: plane grids, the shared angular plane, coefficients.

A light field on plane p is expanded as

    L(s,u,t,v) = sum_k a_k(X0p(s,u,t,v)) sum_i rect_i(s,t) f[k, i]

where ``a_k`` is an angular basis element on the angular plane (a rect cell
for the pillbox basis, an impulse for the Dirac basis) evaluated at the point
where the ray lands on that plane, and ``rect_i`` is pixel i of plane p.
Coefficients are stored as float32 arrays of shape (K, n_t, n_s), view-major
with s varying fastest.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .optics import Ray, SeparableAffineTransform, apply, identity

DEGENERATE_TOL = 1e-12


class AngularBasis(str, enum.Enum):
    DIRAC = "dirac"
    PILLBOX = "pillbox"


def grid_centers(n: int, delta: float, center: float = 0.0) -> np.ndarray:
    return center + (np.arange(n) - (n - 1) / 2.0) * delta


@dataclass(frozen=True)
class PlaneGeometry:
    n_s: int
    n_t: int
    delta_s: float
    delta_t: float
    center_s: float = 0.0
    center_t: float = 0.0
    to_angular: SeparableAffineTransform = field(default_factory=identity)

    def __post_init__(self):
        if self.n_s < 1 or self.n_t < 1:
            raise ValueError("plane needs at least one sample per axis")
        if not (self.delta_s > 0 and self.delta_t > 0):
            raise ValueError("plane spacings must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_t, self.n_s)

    def n(self, axis: str) -> int:
        return self.n_s if axis == "s" else self.n_t

    def delta(self, axis: str) -> float:
        return self.delta_s if axis == "s" else self.delta_t

    def center(self, axis: str) -> float:
        return self.center_s if axis == "s" else self.center_t

    def centers(self, axis: str) -> np.ndarray:
        return grid_centers(self.n(axis), self.delta(axis), self.center(axis))

    def edge0(self, axis: str) -> float:
        return self.center(axis) - 0.5 * self.n(axis) * self.delta(axis)

    def same_grid(self, other: "PlaneGeometry") -> bool:
        return (self.n_s, self.n_t) == (other.n_s, other.n_t) and np.allclose(
            [self.delta_s, self.delta_t, self.center_s, self.center_t],
            [other.delta_s, other.delta_t, other.center_s, other.center_t],
            rtol=0, atol=1e-12)

    def subgrid(self, i_s0: int, i_s1: int, i_t0: int, i_t1: int) -> "PlaneGeometry":
        """Rectangular window [i_s0, i_s1) x [i_t0, i_t1) of this grid."""
        cs, ct = self.centers("s"), self.centers("t")
        return replace(
            self, n_s=i_s1 - i_s0, n_t=i_t1 - i_t0,
            center_s=0.5 * (cs[i_s0] + cs[i_s1 - 1]),
            center_t=0.5 * (ct[i_t0] + ct[i_t1 - 1]))


@dataclass(frozen=True)
class AngularPlane:
    k_s: int
    k_t: int
    delta_s0: float
    delta_t0: float
    basis: AngularBasis = AngularBasis.PILLBOX

    def __post_init__(self):
        if self.k_s < 1 or self.k_t < 1:
            raise ValueError("angular plane needs k_s, k_t >= 1")
        if not (self.delta_s0 > 0 and self.delta_t0 > 0):
            raise ValueError("angular spacings must be positive")
        object.__setattr__(self, "basis", AngularBasis(self.basis))

    @classmethod
    def over_aperture(cls, k_s: int, k_t: int, aperture_mm: float,
                      basis=AngularBasis.PILLBOX) -> "AngularPlane":
        """K cells tiling a square aperture, centers inset by half a cell."""
        return cls(k_s, k_t, aperture_mm / k_s, aperture_mm / k_t, AngularBasis(basis))

    @property
    def K(self) -> int:
        return self.k_s * self.k_t

    def delta0(self, axis: str) -> float:
        return self.delta_s0 if axis == "s" else self.delta_t0

    def view_center(self, k: int) -> tuple[float, float]:
        """Lexicographic view order, s index fastest."""
        i_t, i_s = divmod(k, self.k_s)
        return (grid_centers(self.k_s, self.delta_s0)[i_s],
                grid_centers(self.k_t, self.delta_t0)[i_t])

    def view_centers(self, axis: str) -> np.ndarray:
        """Per-view angular centers along ``axis`` for all K views."""
        k = np.arange(self.K)
        if axis == "s":
            return grid_centers(self.k_s, self.delta_s0)[k % self.k_s]
        return grid_centers(self.k_t, self.delta_t0)[k // self.k_s]


@dataclass(eq=False)
class LightFieldCoeffs:
    plane: PlaneGeometry
    views: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.views, dtype=np.float32)
        if v.ndim != 3 or v.shape[1:] != self.plane.shape:
            raise ValueError(
                f"views shape {v.shape} does not match (K, {self.plane.n_t}, {self.plane.n_s})")
        if not np.all(np.isfinite(v)):
            raise ValueError("light field coefficients must be finite")
        self.views = v

    @classmethod
    def zeros(cls, plane: PlaneGeometry, K: int) -> "LightFieldCoeffs":
        return cls(plane, np.zeros((K, plane.n_t, plane.n_s), np.float32))

    @property
    def K(self) -> int:
        return self.views.shape[0]

    def get(self, k: int, i_s: int, i_t: int) -> float:
        return float(self.views[k, i_t, i_s])

    def set(self, k: int, i_s: int, i_t: int, value: float) -> None:
        self.views[k, i_t, i_s] = value

    def flat(self) -> np.ndarray:
        """Buffer of length K*n_s*n_t, view-major, s fastest."""
        return self.views.reshape(-1)


def _axis_volume(plane: PlaneGeometry, angular: AngularPlane, axis: str) -> float:
    m, _ = plane.to_angular.block(axis)
    slope = abs(m[0, 1])
    if slope <= DEGENERATE_TOL:
        raise ValueError(
            f"plane maps to the angular plane independently of the {axis}-slope; "
            "its basis elements are not square integrable")
    return plane.delta(axis) * angular.delta0(axis) / slope


def basis_volume(plane: PlaneGeometry, angular: AngularPlane) -> float:
    """Squared L2 norm of one 4D basis element on ``plane``.

    For each axis the slope integral of the angular rect contributes
    delta0 / |X_su| and the spatial rect contributes delta_p. Under the Dirac
    basis the (undefined) squared impulse is replaced by the same factor,
    which keeps transport from a plane onto itself equal to the identity.
    """
    return _axis_volume(plane, angular, "s") * _axis_volume(plane, angular, "t")


def eval_lightfield(coeffs: LightFieldCoeffs, angular: AngularPlane, ray: Ray) -> float:
    plane = coeffs.plane
    on_angular = apply(plane.to_angular, ray)
    total = 0.0
    idx = {}
    for axis, pos in (("s", ray.s), ("t", ray.t)):
        rel = (pos - plane.edge0(axis)) / plane.delta(axis)
        # closed rect: a point on a shared edge belongs to both neighbours
        cand = {int(np.floor(rel)), int(np.ceil(rel) - 1)}
        idx[axis] = [i for i in cand if 0 <= i < plane.n(axis)]
    if not idx["s"] or not idx["t"]:
        return 0.0
    ws = on_angular.s
    wt = on_angular.t
    for k in range(coeffs.K):
        cs, ct = angular.view_center(k)
        if abs(ws - cs) > angular.delta_s0 / 2 or abs(wt - ct) > angular.delta_t0 / 2:
            continue
        for i_s in idx["s"]:
            for i_t in idx["t"]:
                total += float(coeffs.views[k, i_t, i_s])
    return total


# --- serialization ---------------------------------------------------------

def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_raw(path, array: np.ndarray, meta: dict) -> None:
    path = Path(path)
    np.ascontiguousarray(array, dtype="<f4").tofile(path)
    sidecar_path(path).write_text(json.dumps(meta, indent=2))


def read_raw(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text())
    data = np.fromfile(path, dtype="<f4")
    return data, meta


def save_lightfield(path, lf: LightFieldCoeffs, angular: AngularPlane) -> None:
    p = lf.plane
    meta = {"k_s": angular.k_s, "k_t": angular.k_t, "n_s": p.n_s, "n_t": p.n_t,
            "delta_s": p.delta_s, "delta_t": p.delta_t,
            "delta_s0": angular.delta_s0, "delta_t0": angular.delta_t0,
            "basis": angular.basis.value}
    write_raw(path, lf.views, meta)


def load_lightfield(path) -> tuple[LightFieldCoeffs, AngularPlane]:
    data, m = read_raw(path)
    angular = AngularPlane(m["k_s"], m["k_t"], m["delta_s0"], m["delta_t0"], m["basis"])
    plane = PlaneGeometry(m["n_s"], m["n_t"], m["delta_s"], m["delta_t"])
    views = data.reshape(angular.K, plane.n_t, plane.n_s)
    return LightFieldCoeffs(plane, views), angular
