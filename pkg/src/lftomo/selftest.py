"""Built-in consistency checks on tiny configurations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import presets
from .camera import scene_plane
from .dense import MatrixOperator, adjoint_gap, probe_matrix, transport_matrix
from .lightfield import AngularBasis, AngularPlane, PlaneGeometry
from .optics import make_translation
from .phantom import gaussian_blob
from .recon import ReconProblem, absorb_weights, majorizer_diag, regularizer
from .rotation import decompose_rotation, rotate_volume
from .system import build_system
from .transport import kernel_row_integral, make_transport, transport_views
from .volume import VoxelVolume


@dataclass
class CheckResult:
    name: str
    max_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tol)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<34s} max_err={self.max_error:.3e}  tol={self.tol:.0e}"


def _tiny_transport(basis=AngularBasis.PILLBOX):
    ang = AngularPlane.over_aperture(2, 2, 14.0, basis)
    src = scene_plane(6, 5, 0.5, 0.5, 250.0, 50.0)
    dst = PlaneGeometry(7, 6, 0.1, 0.1, to_angular=make_translation(60.0))
    return make_transport(src, dst, ang)


def check_dense_oracle(rng) -> CheckResult:
    worst = 0.0
    for basis in AngularBasis:
        op = _tiny_transport(basis)
        f = rng.standard_normal((op.K,) + op.src.shape)
        fast = transport_views(op, f)
        ref = np.stack([(transport_matrix(op, k) @ f[k].ravel()).reshape(op.dst.shape)
                        for k in range(op.K)])
        worst = max(worst, float(np.max(np.abs(fast - ref)) / np.max(np.abs(ref))))
    return CheckResult("dense oracle (relative)", worst, 1e-9)


def check_quadrature(rng) -> CheckResult:
    """Closed-form 1D entries against adaptive quadrature of the raw overlap integral."""
    op = _tiny_transport()
    spec = op.spec_s.select(1)
    edges = spec.src_edges()
    widths = spec.widths
    worst = 0.0
    for i in (0, spec.dst_n // 2):
        c = spec.kernel_centers()[0, i]
        first, last = spec.support(i)
        for j in range(first, last + 1):
            closed = kernel_row_integral(spec, i, edges[j], edges[j + 1])
            a, b = widths[0], widths[1] if len(widths) > 1 else 0.0

            def trap(s):
                # convolution of two centered rects, evaluated directly
                lo = max(-a / 2, s - c - b / 2)
                hi = min(a / 2, s - c + b / 2)
                return max(hi - lo, 0.0) / (a * b) if b else float(abs(s - c) <= a / 2) / a

            pts = sorted({c - (a + b) / 2, c - abs(a - b) / 2, c + abs(a - b) / 2, c + (a + b) / 2})
            pts = [p for p in pts if edges[j] < p < edges[j + 1]]
            val, _ = integrate.quad(trap, edges[j], edges[j + 1], points=pts or None,
                                    epsabs=1e-13, epsrel=1e-12)
            worst = max(worst, abs(closed - spec.mass * val))
    return CheckResult("kernel vs quadrature", worst, 1e-6)


def _system_gap(op, rng, n=5):
    worst = 0.0
    for _ in range(n):
        x = rng.standard_normal(op.volume_shape).astype(np.float32)
        y = rng.standard_normal(op.image_shape).astype(np.float32)
        worst = max(worst, adjoint_gap(op.forward, op.adjoint, x, y))
    return worst


def check_adjoints(rng) -> list[CheckResult]:
    shape, delta = (6, 5, 4), (1.0, 1.0, 1.0)
    single = build_system(presets.tiny_single(yaw=0.0), shape, delta)
    plen = build_system(presets.tiny_plenoptic(yaw=15.0), shape, delta)
    plan = decompose_rotation(20.0, 10.0, -5.0)
    worst = 0.0
    for _ in range(5):
        x = rng.standard_normal((4, 5, 6))
        fx = rotate_volume(plan, VoxelVolume(x, delta))
        y = rng.standard_normal(fx.data.shape)
        aty = rotate_volume(plan, VoxelVolume(y, fx.delta), "adjoint")
        worst = max(worst, abs(np.vdot(fx.data, y) - np.vdot(x, aty.data))
                    / (np.linalg.norm(fx.data) * np.linalg.norm(y)))
    return [CheckResult("adjoint single-lens system", _system_gap(single, rng), 1e-4),
            CheckResult("adjoint plenoptic system (15 deg)", _system_gap(plen, rng), 1e-4),
            CheckResult("adjoint rotation", worst, 1e-4)]


def check_majorizer(rng) -> CheckResult:
    shape = (4, 4, 3)
    op = build_system(presets.tiny_single(k=2, n_det=10), (3, 4, 4), (1.0, 1.0, 1.0))
    a = probe_matrix(op)
    cam = MatrixOperator(a, shape, op.image_shape)
    beta = 0.05 * float(np.max(np.sum(a * a, axis=0)))
    prob = ReconProblem(absorb_weights([cam], [np.ones(op.image_shape)]), beta=beta)
    d = majorizer_diag(prob)
    worst = -np.inf
    for _ in range(200):
        v = rng.standard_normal(shape)
        lhs = float(np.sum(d * v * v))
        av = a @ v.ravel()
        rhs = float(av @ av) + float(np.vdot(v, regularizer(v, beta, "gradient")))
        worst = max(worst, (rhs - lhs) / lhs)
    return CheckResult("majorizer domination (rhs-lhs)/lhs", max(worst, 0.0), 0.0)


def check_rotation() -> list[CheckResult]:
    plan = decompose_rotation(25.0, -10.0, 5.0)
    back = decompose_rotation(0.0, 0.0, 0.0)
    shape, delta = (32, 32, 32), (1.0, 1.0, 1.0)
    blob = gaussian_blob(shape, delta, (5.0, 4.0, 3.0), (1.0, -1.0, 0.5))
    fwd = rotate_volume(plan, VoxelVolume(blob, delta))
    inv = decompose_rotation(*_inverse_angles(plan.theta))
    rt = rotate_volume(inv, VoxelVolume(fwd.data, fwd.delta))
    ref = gaussian_blob(shape, rt.delta, (5.0, 4.0, 3.0), (1.0, -1.0, 0.5),
                        plan.theta @ inv.theta)
    err = float(np.linalg.norm(rt.data - ref) / np.linalg.norm(ref))
    return [CheckResult("rotation decomposition (Frobenius)", max(plan.error(), back.error()), 1e-12),
            CheckResult("rotation round trip NRMSE", err, 0.10)]


def _inverse_angles(theta):
    from .rotation import rotation_angles
    return rotation_angles(np.asarray(theta).T)


def run_selftest(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = [check_dense_oracle(rng), check_quadrature(rng)]
    results += check_adjoints(rng)
    results.append(check_majorizer(rng))
    results += check_rotation()
    return results
