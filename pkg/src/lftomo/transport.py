"""Light transport between optical planes, occlusion and measurement.

For every angular view k the transport from plane q to plane p factors into
an s filter and a t filter (Kronecker structure), each a 1D box-spline blur:

    entry(i, j) = mass * integral over source cell j of p(s - alpha*x_i - shift)

where p is the density of a sum of uniforms with widths
``(|alpha| * dst_spacing, *tau)``. The Dirac angular basis gives no extra
width (a rect kernel); the pillbox basis adds the footprint of one angular
cell (a trapezoid). Forward transport is ``(1/V^p) B^{pq}``; the adjoint is
computed as ``(V^q/V^p)`` times forward transport from p back to q.
"""

from __future__ import annotations

import contextlib
import dataclasses
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .lightfield import (AngularBasis, AngularPlane, LightFieldCoeffs, PlaneGeometry,
                         basis_volume, grid_centers)

DEGENERATE_TOL = 1e-12


# --- execution settings and instrumentation --------------------------------

@dataclass
class ExecutionConfig:
    serial: bool = False
    workers: int = max(1, min(8, os.cpu_count() or 1))


EXEC = ExecutionConfig()


@contextlib.contextmanager
def serial_execution(flag: bool = True):
    old = EXEC.serial
    EXEC.serial = flag
    try:
        yield
    finally:
        EXEC.serial = old


@dataclass
class Counters:
    transport_applications: int = 0   # per-view 2D transports B_k f_k
    kernel_integrals: int = 0         # closed-form kernel integrals, one per output sample and pass
    antiderivative_lookups: int = 0   # running-integral evaluations behind those integrals
    entry_integrals: int = 0          # kernel_row_integral calls (dense assembly)

    def reset(self):
        for f in dataclasses.fields(self):
            setattr(self, f.name, 0)

    def snapshot(self) -> dict:
        return dataclasses.asdict(self)


COUNTERS = Counters()


@contextlib.contextmanager
def counting():
    """Reset the global counters and yield them."""
    COUNTERS.reset()
    yield COUNTERS


# test hook: relative error injected into the fast filter path
_FAULT = {"kernel_scale": 1.0}


@contextlib.contextmanager
def inject_kernel_fault(scale: float = 1.01):
    old = _FAULT["kernel_scale"]
    _FAULT["kernel_scale"] = scale
    try:
        yield
    finally:
        _FAULT["kernel_scale"] = old


# --- 1D blur specification --------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlurSpec1D:
    """One 1D transport (or shear) filter.

    ``shift`` may be an array, describing a batch of filters that differ only
    by translation (one per view, or one per volume line).
    """

    alpha: float
    shift: float | np.ndarray
    tau: tuple[float, ...]
    mass: float
    src_n: int
    src_spacing: float
    src_center: float
    dst_n: int
    dst_spacing: float
    dst_center: float

    @property
    def widths(self) -> tuple[float, ...]:
        return kernels.prune_widths((abs(self.alpha) * self.dst_spacing,) + tuple(self.tau))

    @property
    def h(self) -> float:
        """Peak-normalization: kernel(x) = h * (rect conv rect ...)(x)."""
        raw = (abs(self.alpha) * self.dst_spacing,) + tuple(self.tau)
        prod = math.prod(raw)
        return self.mass / prod if prod > 0 else math.inf

    @property
    def batched(self) -> bool:
        return np.ndim(self.shift) > 0

    def dst_centers(self) -> np.ndarray:
        return grid_centers(self.dst_n, self.dst_spacing, self.dst_center)

    def src_edges(self) -> np.ndarray:
        e0 = self.src_center - 0.5 * self.src_n * self.src_spacing
        return e0 + self.src_spacing * np.arange(self.src_n + 1)

    def kernel_centers(self) -> np.ndarray:
        """(B, dst_n) kernel centers in source coordinates."""
        shift = np.atleast_1d(np.asarray(self.shift, dtype=np.float64))
        return self.alpha * self.dst_centers()[None, :] + shift[:, None]

    def select(self, b: int) -> "BlurSpec1D":
        return dataclasses.replace(self, shift=float(np.atleast_1d(self.shift)[b]))

    def transpose(self) -> "BlurSpec1D":
        """The filter whose matrix is the transpose of this one.

        Swaps source and destination roles; no matrix is formed.
        """
        a = abs(self.alpha)
        return BlurSpec1D(
            alpha=1.0 / self.alpha,
            shift=-np.asarray(self.shift, dtype=np.float64) / self.alpha
            if self.batched else -float(self.shift) / self.alpha,
            tau=tuple(w / a for w in self.tau),
            mass=self.mass * self.src_spacing / (a * self.dst_spacing),
            src_n=self.dst_n, src_spacing=self.dst_spacing, src_center=self.dst_center,
            dst_n=self.src_n, dst_spacing=self.src_spacing, dst_center=self.src_center)

    def support(self, dst_index: int, b: int = 0) -> tuple[int, int]:
        """Contiguous [first, last] source cells touched by row ``dst_index``."""
        c = self.kernel_centers()[b, dst_index]
        half = 0.5 * sum(self.widths)
        edges = self.src_edges()
        first = int(np.searchsorted(edges, c - half, side="right")) - 1
        last = int(np.searchsorted(edges, c + half, side="left")) - 1
        return max(first, 0), min(last, self.src_n - 1)


def _axis_relation(src: PlaneGeometry, dst: PlaneGeometry, axis: str):
    """Coefficients of s_p = a1*s_q + b1*w + a0 for rays through angular point w."""
    mq, oq = src.to_angular.block(axis)
    mp, op = dst.to_angular.block(axis)
    if abs(mq[0, 1]) <= DEGENERATE_TOL:
        raise ValueError(f"source plane is the angular plane along {axis}; transport undefined")
    det_p = np.linalg.det(mp)
    if abs(det_p) <= DEGENERATE_TOL:
        raise ValueError(f"destination transform singular along {axis}")
    mp_inv = np.linalg.inv(mp)
    apq = mp_inv @ mq
    opq = mp_inv @ (oq - op)
    a1 = apq[0, 0] - apq[0, 1] * mq[0, 0] / mq[0, 1]
    b1 = apq[0, 1] / mq[0, 1]
    a0 = opq[0] - apq[0, 1] * oq[0] / mq[0, 1]
    return a1, b1, a0, abs(mq[0, 1])


def derive_blur_spec(src: PlaneGeometry, dst: PlaneGeometry, angular: AngularPlane,
                     k: int | None, axis: str) -> BlurSpec1D:
    """Closed-form 1D transport filter from ``src`` to ``dst`` for view ``k``.

    ``k=None`` returns the batch over all K views.
    """
    a1, b1, a0, slope_q = _axis_relation(src, dst, axis)
    if abs(a1) <= DEGENERATE_TOL:
        raise ValueError(
            f"destination pixels along {axis} have unbounded preimage (plane conjugate "
            "to the angular plane)")
    d0 = angular.delta0(axis)
    centers = angular.view_centers(axis)
    w_k = centers if k is None else centers[k]
    tau = ()
    if angular.basis is AngularBasis.PILLBOX:
        tau = (abs(b1) * d0 / abs(a1),)
    return BlurSpec1D(
        alpha=1.0 / a1,
        shift=-(a0 + b1 * np.asarray(w_k)) / a1 if k is None else -(a0 + b1 * w_k) / a1,
        tau=tau,
        mass=d0 * dst.delta(axis) / (abs(a1) * slope_q),
        src_n=src.n(axis), src_spacing=src.delta(axis), src_center=src.center(axis),
        dst_n=dst.n(axis), dst_spacing=dst.delta(axis), dst_center=dst.center(axis))


def kernel_row_integral(spec: BlurSpec1D, dst_index: int, lo: float, hi: float,
                        b: int = 0) -> float:
    """Exact integral of row ``dst_index``'s kernel over [lo, hi] (source units)."""
    if hi < lo:
        raise ValueError("interval must satisfy lo <= hi")
    COUNTERS.entry_integrals += 1
    if hi == lo:
        return 0.0
    c = spec.kernel_centers()[b, dst_index]
    w = spec.widths
    return float(spec.mass * (kernels.box_cdf(hi - c, w) - kernels.box_cdf(lo - c, w)))


def filter_axis0(spec: BlurSpec1D, data: np.ndarray) -> np.ndarray:
    """Filter every line along axis -2 of a (B, n_src, m) array.

    Batch b uses ``spec.select(b)``; B may be 1 for a shared input. Each output
    sample is produced by exactly one kernel integral.
    """
    if data.shape[-2] != spec.src_n:
        raise ValueError(f"line length {data.shape[-2]} != filter source size {spec.src_n}")
    centers = spec.kernel_centers()
    if centers.shape[0] == 1 and data.shape[0] > 1:
        centers = np.broadcast_to(centers, (data.shape[0], centers.shape[1]))
    w = spec.widths
    edge0 = spec.src_center - 0.5 * spec.src_n * spec.src_spacing
    mass = spec.mass * _FAULT["kernel_scale"]
    n_out = centers.shape[0] * centers.shape[1] * data.shape[-1]
    COUNTERS.kernel_integrals += n_out
    COUNTERS.antiderivative_lookups += n_out * 2 ** len(w)
    return kernels.filter_lines(data, edge0, spec.src_spacing, centers, w, mass)


def _lines_last_to_first(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.swapaxes(a, -1, -2))


def apply_blur_1d(spec: BlurSpec1D, view: np.ndarray, axis: str = "minor",
                  direction: str = "forward") -> np.ndarray:
    """Filter a single (n_t, n_s) view along t ("minor") or s ("major")."""
    if spec.batched:
        raise ValueError("apply_blur_1d takes a single (unbatched) filter")
    if direction == "adjoint":
        spec = spec.transpose()
    elif direction != "forward":
        raise ValueError(f"unknown direction {direction!r}")
    view = np.asarray(view, dtype=np.float64)
    if axis == "minor":
        return filter_axis0(spec, view[None])[0]
    if axis == "major":
        out = filter_axis0(spec, _lines_last_to_first(view)[None])[0]
        return _lines_last_to_first(out)
    raise ValueError(f"axis must be 'minor' or 'major', got {axis!r}")


def two_pass(spec_s: BlurSpec1D, spec_t: BlurSpec1D, views: np.ndarray) -> np.ndarray:
    """(B, n_t, n_s) -> filter t, transpose, filter s, transpose back."""
    tmp = filter_axis0(spec_t, views)
    tmp = _lines_last_to_first(tmp)
    tmp = filter_axis0(spec_s, tmp)
    return _lines_last_to_first(tmp)


# --- transport operator -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransportOp:
    """Per-view transport q -> p: f^p_k = (1/V^p) (B_s,k kron B_t,k) f^q_k."""

    src: PlaneGeometry
    dst: PlaneGeometry
    angular: AngularPlane
    spec_s: BlurSpec1D   # batched over views
    spec_t: BlurSpec1D
    src_volume: float
    dst_volume: float

    @property
    def K(self) -> int:
        return self.angular.K

    def view_specs(self, k: int) -> tuple[BlurSpec1D, BlurSpec1D]:
        return self.spec_s.select(k), self.spec_t.select(k)


def make_transport(src: PlaneGeometry, dst: PlaneGeometry,
                   angular: AngularPlane) -> TransportOp:
    return TransportOp(
        src=src, dst=dst, angular=angular,
        spec_s=derive_blur_spec(src, dst, angular, None, "s"),
        spec_t=derive_blur_spec(src, dst, angular, None, "t"),
        src_volume=basis_volume(src, angular),
        dst_volume=basis_volume(dst, angular))


def reverse_transport(op: TransportOp) -> TransportOp:
    return make_transport(op.dst, op.src, op.angular)


def _select_views(spec: BlurSpec1D, ks) -> BlurSpec1D:
    shift = np.atleast_1d(spec.shift)[ks]
    return dataclasses.replace(spec, shift=shift)


def transport_views(op: TransportOp, views: np.ndarray, ks=None) -> np.ndarray:
    """Forward transport of raw (K', n_t, n_s) arrays for view indices ``ks``.

    ``views`` may have a leading size of 1 when the same coefficients feed all
    selected views. Returns float64 (K', n_t', n_s').
    """
    ks = np.arange(op.K) if ks is None else np.asarray(ks)
    views = np.asarray(views)
    if views.shape[1:] != op.src.shape:
        raise ValueError(f"views shape {views.shape[1:]} != source plane {op.src.shape}")
    COUNTERS.transport_applications += len(ks)
    spec_s = _select_views(op.spec_s, ks)
    spec_t = _select_views(op.spec_t, ks)
    scale = 1.0 / op.dst_volume
    if EXEC.serial or len(ks) == 1:
        outs = []
        for b in range(len(ks)):
            v = views[b if views.shape[0] > 1 else 0][None]
            outs.append(two_pass(spec_s.select(b), spec_t.select(b), v)[0])
        return np.stack(outs) * scale
    chunks = np.array_split(np.arange(len(ks)), min(EXEC.workers, len(ks)))

    def run(idx):
        v = views[idx] if views.shape[0] > 1 else views
        return two_pass(_select_views(spec_s, idx), _select_views(spec_t, idx), v)

    if EXEC.workers > 1:
        with ThreadPoolExecutor(EXEC.workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(idx) for idx in chunks]
    return np.concatenate(parts) * scale


def apply_transport(op: TransportOp, src: LightFieldCoeffs,
                    direction: str = "forward") -> LightFieldCoeffs:
    if direction == "forward":
        if not src.plane.same_grid(op.src):
            raise ValueError("light field plane does not match transport source")
        out = transport_views(op, src.views)
        return LightFieldCoeffs(op.dst, out.astype(np.float32))
    if direction == "adjoint":
        if not src.plane.same_grid(op.dst):
            raise ValueError("light field plane does not match transport destination")
        rev = reverse_transport(op)
        out = transport_views(rev, src.views) * (op.src_volume / op.dst_volume)
        return LightFieldCoeffs(op.src, out.astype(np.float32))
    raise ValueError(f"unknown direction {direction!r}")


# --- occlusion and measurement ---------------------------------------------

@dataclass(frozen=True, eq=False)
class OccluderMask:
    plane: PlaneGeometry
    values: np.ndarray   # (n_t, n_s) in [0, 1]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.shape != self.plane.shape:
            raise ValueError("mask shape does not match its plane")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("mask values must lie in [0, 1]")
        object.__setattr__(self, "values", v)


def apply_mask(mask: OccluderMask, lf: LightFieldCoeffs) -> LightFieldCoeffs:
    """Diagonal and therefore self-adjoint."""
    if not lf.plane.same_grid(mask.plane):
        raise ValueError("mask plane does not match light field plane")
    return LightFieldCoeffs(lf.plane, lf.views * mask.values[None])


def measure(detector: LightFieldCoeffs | np.ndarray, detector_volume: float,
            direction: str = "forward", K: int | None = None,
            plane: PlaneGeometry | None = None):
    """y = sqrt(V_d) * sum_k f_k (forward); broadcast sqrt(V_d) * y (adjoint)."""
    root = math.sqrt(detector_volume)
    if direction == "forward":
        views = detector.views if isinstance(detector, LightFieldCoeffs) else detector
        return (root * np.sum(views, axis=0, dtype=np.float64)).astype(np.float32)
    if direction == "adjoint":
        if K is None or plane is None:
            raise ValueError("adjoint measurement needs K and the detector plane")
        y = np.asarray(detector, dtype=np.float32)
        views = np.broadcast_to(root * y, (K,) + y.shape).astype(np.float32)
        return LightFieldCoeffs(plane, views)
    raise ValueError(f"unknown direction {direction!r}")
