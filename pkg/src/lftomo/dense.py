"""Explicit matrix assembly for small instances (reference oracle only).

Entries come one by one from ``kernel_row_integral``; nothing here shares code
with the running-integral fast path.
"""

from __future__ import annotations

import numpy as np

from .transport import BlurSpec1D, TransportOp, kernel_row_integral


def blur_matrix(spec: BlurSpec1D, b: int = 0) -> np.ndarray:
    edges = spec.src_edges()
    out = np.zeros((spec.dst_n, spec.src_n))
    for i in range(spec.dst_n):
        first, last = spec.support(i, b)
        for j in range(first, last + 1):
            out[i, j] = kernel_row_integral(spec, i, edges[j], edges[j + 1], b)
    return out


def transport_matrix(op: TransportOp, k: int) -> np.ndarray:
    """(n_t' n_s') x (n_t n_s) matrix of (1/V^p) B_k, rows/cols s fastest."""
    bs = blur_matrix(op.spec_s, k)
    bt = blur_matrix(op.spec_t, k)
    return np.kron(bt, bs) / op.dst_volume


def adjoint_gap(forward, adjoint, x, y) -> float:
    """|<Ax, y> - <x, A'y>| / (|Ax| |y|), accumulated in float64."""
    ax = np.asarray(forward(x), dtype=np.float64)
    aty = np.asarray(adjoint(y), dtype=np.float64)
    lhs = float(np.vdot(ax.ravel(), np.asarray(y, dtype=np.float64).ravel()))
    rhs = float(np.vdot(np.asarray(x, dtype=np.float64).ravel(), aty.ravel()))
    denom = float(np.linalg.norm(ax) * np.linalg.norm(y))
    if denom == 0:
        return abs(lhs - rhs)
    return abs(lhs - rhs) / denom


class MatrixOperator:
    """Per-view dense system matrices with the camera interface used by recon."""

    def __init__(self, mats, volume_shape, image_shape):
        self.mats = np.asarray(mats, dtype=np.float64)
        if self.mats.ndim == 2:
            self.mats = self.mats[None]
        self.volume_shape = tuple(volume_shape)
        self.image_shape = tuple(image_shape)
        if self.mats.shape[1:] != (int(np.prod(image_shape)), int(np.prod(volume_shape))):
            raise ValueError("matrix shape does not match the volume and image shapes")
        self._full = self.mats.sum(axis=0)

    @property
    def K(self) -> int:
        return self.mats.shape[0]

    def _sum(self, ks):
        if ks is None:
            return self._full
        ks = np.asarray(ks)
        return self.mats[ks].sum(axis=0)

    def forward(self, x, ks=None):
        return (self._sum(ks) @ np.asarray(x, np.float64).ravel()).reshape(self.image_shape)

    def adjoint(self, r, ks=None):
        return (self._sum(ks).T @ np.asarray(r, np.float64).ravel()).reshape(self.volume_shape)


def probe_matrix(op, ks=None) -> np.ndarray:
    """Assemble any linear camera operator column by column (tiny sizes only)."""
    n = int(np.prod(op.volume_shape))
    cols = []
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        cols.append(np.asarray(op.forward(e.reshape(op.volume_shape), ks)).ravel())
        e[j] = 0.0
    return np.stack(cols, axis=1)
