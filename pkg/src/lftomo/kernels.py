"""Box-spline blur kernels and their closed-form integrals.

Every resampling kernel in the package is the density of a sum of independent
centered uniform variables (a "box spline"):

* one box: the Dirac-basis transport kernel (a rect),
* two boxes: the pillbox-basis transport kernel (a trapezoid),
* three boxes: the voxel shear kernel (piecewise quadratic).

Two independent evaluation routes are provided. ``box_cdf`` gives exact entry
integrals (used to assemble dense reference matrices), while ``filter_lines``
applies the kernel to piecewise-constant data through repeated running
integrals, so the work per output sample does not depend on the blur width.
"""

from __future__ import annotations

import itertools
import math

import numba
import numpy as np

# widths below this fraction of the largest width are treated as zero
PRUNE_RTOL = 1e-4


def prune_widths(widths) -> tuple[float, ...]:
    w = [abs(float(x)) for x in widths]
    if not w or max(w) <= 0:
        raise ValueError(f"kernel needs at least one positive width, got {widths}")
    top = max(w)
    return tuple(x for x in w if x > PRUNE_RTOL * top)


def _corners(widths):
    """Yield (sign, offset) pairs of the box-spline difference stencil."""
    for signs in itertools.product((1.0, -1.0), repeat=len(widths)):
        yield math.prod(signs), 0.5 * sum(s * w for s, w in zip(signs, widths))


def box_cdf(x, widths) -> np.ndarray:
    """CDF of a sum of centered uniforms with the given (pruned) widths."""
    x = np.asarray(x, dtype=np.float64)
    n = len(widths)
    half = 0.5 * sum(widths)
    acc = np.zeros_like(x)
    for sign, off in _corners(widths):
        acc += sign * np.maximum(x + off, 0.0) ** n
    out = acc / (math.factorial(n) * math.prod(widths))
    out = np.where(x >= half, 1.0, np.where(x <= -half, 0.0, out))
    return np.clip(out, 0.0, 1.0)


def box_pdf(x, widths) -> np.ndarray:
    """Density of the same sum (piecewise polynomial of degree n-1)."""
    x = np.asarray(x, dtype=np.float64)
    n = len(widths)
    acc = np.zeros_like(x)
    for sign, off in _corners(widths):
        z = x + off
        acc += sign * (np.where(z > 0, z ** (n - 1), 0.0) if n > 1 else (z > 0))
    return np.maximum(acc / (math.factorial(n - 1) * math.prod(widths)), 0.0)


def running_integrals(values: np.ndarray, delta: float, order: int) -> list[np.ndarray]:
    """Repeated integrals of a piecewise-constant line sampled at cell edges.

    ``values`` has cells along axis -2. Returns ``[G1, ..., G_order]`` where
    ``G_l`` has one more row than ``values`` and holds the l-th antiderivative
    (starting at zero on the left edge) at each cell edge.
    """
    v = np.asarray(values, dtype=np.float64)
    shape = v.shape[:-2] + (v.shape[-2] + 1, v.shape[-1])
    tables = []
    prev = [np.zeros(shape) for _ in range(order)]
    # G_l[e+1] = sum_{m<l} G_{l-m}[e] d^m/m! + f_e d^l/l!, a per-edge recurrence
    # expressed as cumulative sums of exact per-cell increments.
    for level in range(1, order + 1):
        inc = v * (delta ** level / math.factorial(level))
        for m in range(1, level):
            inc = inc + prev[level - m - 1][..., :-1, :] * (delta ** m / math.factorial(m))
        g = np.zeros(shape)
        np.cumsum(inc, axis=-2, out=g[..., 1:, :])
        prev[level - 1] = g
        tables.append(g)
    return tables


def eval_antiderivative(values, tables, edge0, delta, x) -> np.ndarray:
    """Evaluate the top-order antiderivative at points ``x``.

    ``values``/``tables`` have batch shape (B, ., m); ``x`` has shape (B, P).
    Returns (B, P, m).
    """
    order = len(tables)
    n_cells = values.shape[-2]
    pos = (x - edge0) / delta
    idx = np.floor(pos).astype(np.int64)
    left = idx < 0
    idx_c = np.clip(idx, 0, n_cells)
    d = (x - (edge0 + idx_c * delta))[..., None]
    gidx = idx_c[..., None]
    out = np.zeros(x.shape + (values.shape[-1],))
    for m in range(order):
        g = np.take_along_axis(tables[order - m - 1], gidx, axis=-2)
        out += g * (d ** m / math.factorial(m))
    inside = np.minimum(idx_c, n_cells - 1)[..., None]
    f = np.take_along_axis(values, inside, axis=-2)
    f = np.where((idx_c < n_cells)[..., None], f, 0.0)
    out += f * (d ** order / math.factorial(order))
    return np.where(left[..., None], 0.0, out)


def filter_lines_numpy(values, edge0, delta, centers, widths, mass) -> np.ndarray:
    """out[b, i, :] = mass * integral of p(s - centers[b, i]) * line_b(s) ds.

    ``values``: (B, n_src, m) piecewise-constant lines on cells of width
    ``delta`` starting at ``edge0`` (zero outside). ``centers``: (B, n_dst).
    ``mass`` broadcasts against (B, 1, 1). Batch dimension B of ``values`` may
    be 1 and is then shared by every row of ``centers``.
    """
    values = np.asarray(values, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    n = len(widths)
    tables = running_integrals(values, delta, n)
    batch = centers.shape[0]
    if values.shape[0] != batch:
        values = np.broadcast_to(values, (batch,) + values.shape[1:])
        tables = [np.broadcast_to(t, (batch,) + t.shape[1:]) for t in tables]
    offs = list(_corners(widths))
    pts = centers[:, :, None] + np.array([o for _, o in offs])[None, None, :]
    vals = eval_antiderivative(values, tables, edge0, delta,
                               pts.reshape(batch, -1))
    vals = vals.reshape(batch, centers.shape[1], len(offs), values.shape[-1])
    # fixed summation order keeps batched and per-view results bitwise equal
    out = np.zeros((batch, centers.shape[1], values.shape[-1]))
    for c, (sign, _) in enumerate(offs):
        out += sign * vals[:, :, c, :]
    return out * (np.asarray(mass, dtype=np.float64) / math.prod(widths))


@numba.njit(cache=True, nogil=True)
def _filter_kernel(values, centers, offs, signs, edge0, delta, order, out):
    n_batch, n_pts = centers.shape
    n_vb, n, m = values.shape
    fact = np.ones(order + 1)
    for i in range(1, order + 1):
        fact[i] = fact[i - 1] * i
    dpow = np.ones(order + 1)
    for i in range(1, order + 1):
        dpow[i] = dpow[i - 1] * delta
    tables = np.zeros((order, n + 1, m))
    for b in range(n_batch):
        vb = values[b if n_vb > 1 else 0]
        if b == 0 or n_vb > 1:
            for e in range(n):
                for lev in range(order):
                    for j in range(m):
                        inc = vb[e, j] * dpow[lev + 1] / fact[lev + 1]
                        for k in range(1, lev + 1):
                            inc += tables[lev - k, e, j] * dpow[k] / fact[k]
                        tables[lev, e + 1, j] = tables[lev, e, j] + inc
        for p in range(n_pts):
            for c in range(offs.shape[0]):
                x = centers[b, p] + offs[c]
                idx = int(np.floor((x - edge0) / delta))
                if idx < 0:
                    continue
                if idx > n:
                    idx = n
                d = x - (edge0 + idx * delta)
                for j in range(m):
                    acc = 0.0
                    dk = 1.0
                    for k in range(order):
                        acc += tables[order - k - 1, idx, j] * dk / fact[k]
                        dk *= d
                    if idx < n:
                        acc += vb[idx, j] * dk / fact[order]
                    out[b, p, j] += signs[c] * acc


def filter_lines(values, edge0, delta, centers, widths, mass) -> np.ndarray:
    """Same contract as ``filter_lines_numpy``; compiled loop, no large temporaries."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    corners = list(_corners(widths))
    offs = np.array([o for _, o in corners])
    signs = np.array([s for s, _ in corners])
    out = np.zeros((centers.shape[0], centers.shape[1], values.shape[-1]))
    _filter_kernel(values, centers, offs, signs, float(edge0), float(delta), len(widths), out)
    return out * (np.asarray(mass, dtype=np.float64) / math.prod(widths))
