"""Paraxial ray transforms on two-plane coordinates (s, u, t, v).

A ray is a position (s, t) on a plane plus slopes (u, v). Ideal thin lenses and
free-space propagation act on (s, u) and (t, v) independently, so every
transform here is stored as two 2x2 blocks plus a 4-vector of offsets.

Composition follows function composition: ``compose(a, b)`` applies ``b``
first. Refraction uses ``u' = u - (s - c) / f``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DET_TOL = 1e-12


@dataclass(frozen=True)
class Ray:
    s: float
    u: float
    t: float
    v: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.s, self.u, self.t, self.v])):
            raise ValueError(f"non-finite ray {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.u, self.t, self.v])


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SeparableAffineTransform:
    """theta' = blockdiag(su, tv) @ theta + offsets, theta = (s, u, t, v)."""

    su: np.ndarray
    tv: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "su", _frozen(self.su).reshape(2, 2))
        object.__setattr__(self, "tv", _frozen(self.tv).reshape(2, 2))
        object.__setattr__(self, "offsets", _frozen(self.offsets).reshape(4))

    def block(self, axis: str) -> tuple[np.ndarray, np.ndarray]:
        """Return (2x2 matrix, 2-vector offset) acting on (s,u) or (t,v)."""
        if axis == "s":
            return self.su, self.offsets[:2]
        if axis == "t":
            return self.tv, self.offsets[2:]
        raise ValueError(f"axis must be 's' or 't', got {axis!r}")

    def matrix4(self) -> np.ndarray:
        m = np.zeros((4, 4))
        m[:2, :2] = self.su
        m[2:, 2:] = self.tv
        return m

    def allclose(self, other: "SeparableAffineTransform", atol=1e-12) -> bool:
        return (
            np.allclose(self.su, other.su, atol=atol, rtol=0)
            and np.allclose(self.tv, other.tv, atol=atol, rtol=0)
            and np.allclose(self.offsets, other.offsets, atol=atol, rtol=0)
        )

    def __repr__(self):
        return (
            f"SeparableAffineTransform(su={self.su.tolist()}, "
            f"tv={self.tv.tolist()}, offsets={self.offsets.tolist()})"
        )


def identity() -> SeparableAffineTransform:
    return SeparableAffineTransform(np.eye(2), np.eye(2), np.zeros(4))


def make_translation(distance: float) -> SeparableAffineTransform:
    """Free-space propagation by ``distance`` mm: s' = s + D u."""
    if not np.isfinite(distance):
        raise ValueError("distance must be finite")
    m = np.array([[1.0, distance], [0.0, 1.0]])
    return SeparableAffineTransform(m, m, np.zeros(4))


def make_refraction(focal_length: float, center_s: float = 0.0,
                    center_t: float = 0.0) -> SeparableAffineTransform:
    """Thin lens of focal length ``focal_length`` centered at (center_s, center_t)."""
    if focal_length == 0 or not np.isfinite(focal_length):
        raise ValueError(f"focal length must be finite and nonzero, got {focal_length}")
    m = np.array([[1.0, 0.0], [-1.0 / focal_length, 1.0]])
    offsets = np.array([0.0, center_s / focal_length, 0.0, center_t / focal_length])
    return SeparableAffineTransform(m, m, offsets)


def apply(xform: SeparableAffineTransform, ray: Ray) -> Ray:
    su = xform.su @ np.array([ray.s, ray.u]) + xform.offsets[:2]
    tv = xform.tv @ np.array([ray.t, ray.v]) + xform.offsets[2:]
    return Ray(su[0], su[1], tv[0], tv[1])


def apply_array(xform: SeparableAffineTransform, theta: np.ndarray) -> np.ndarray:
    """Vectorized ``apply`` on an (..., 4) array of (s, u, t, v) rows."""
    theta = np.asarray(theta, dtype=np.float64)
    return theta @ xform.matrix4().T + xform.offsets


def compose(outer: SeparableAffineTransform,
            inner: SeparableAffineTransform) -> SeparableAffineTransform:
    """outer o inner: apply ``inner`` first."""
    su = outer.su @ inner.su
    tv = outer.tv @ inner.tv
    off = np.concatenate([
        outer.su @ inner.offsets[:2] + outer.offsets[:2],
        outer.tv @ inner.offsets[2:] + outer.offsets[2:],
    ])
    return SeparableAffineTransform(su, tv, off)


def compose_all(*xforms: SeparableAffineTransform) -> SeparableAffineTransform:
    """compose_all(a, b, c) == a o b o c."""
    out = identity()
    for x in xforms:
        out = compose(out, x)
    return out


def invert(xform: SeparableAffineTransform) -> SeparableAffineTransform:
    blocks = []
    for name, m in (("su", xform.su), ("tv", xform.tv)):
        det = np.linalg.det(m)
        if abs(det) <= DET_TOL:
            raise np.linalg.LinAlgError(f"{name} block is singular (det={det:g})")
        blocks.append(np.linalg.inv(m))
    su_inv, tv_inv = blocks
    off = np.concatenate([-su_inv @ xform.offsets[:2], -tv_inv @ xform.offsets[2:]])
    return SeparableAffineTransform(su_inv, tv_inv, off)


def block_dets(xform: SeparableAffineTransform) -> tuple[float, float]:
    return float(np.linalg.det(xform.su)), float(np.linalg.det(xform.tv))
