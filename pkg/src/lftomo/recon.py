"""Penalized nonnegative least squares over several cameras with unknown gains.

    Psi(x, g) = 1/2 |A_1 x - y_1|^2 + sum_{c>=2} 1/2 |A_c x - g_c y_c|^2
                + nu |x|_1 + R(x),          x >= 0,

with weights absorbed into A_c and y_c. Minimized by FISTA with a diagonal
majorizer, optional angular-subset gradients and adaptive restart.

A camera here is anything with ``forward(x, ks)``, ``adjoint(image, ks)``,
``K``, ``volume_shape`` and ``image_shape``; ``ks`` selects angular views.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

EPS_MAJORIZER = 1e-12
# half of the 26-neighborhood; the other half are the negated offsets
NEIGHBOR_OFFSETS = [o for o in itertools.product((-1, 0, 1), repeat=3) if o > (0, 0, 0)]


class NumericalError(RuntimeError):
    """Non-finite values during reconstruction."""


# --- weighted cameras -------------------------------------------------------------

@dataclass(eq=False)
class WeightedCamera:
    """A_tilde = W^(1/2) A and y_tilde = W^(1/2) y."""

    op: object
    y: np.ndarray
    sqrt_w: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.op.K

    @property
    def y_tilde(self) -> np.ndarray:
        y = np.asarray(self.y, dtype=np.float64)
        return y if self.sqrt_w is None else self.sqrt_w * y

    def forward(self, x, ks=None) -> np.ndarray:
        out = self.op.forward(x, ks)
        return out if self.sqrt_w is None else self.sqrt_w * out

    def adjoint(self, r, ks=None) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        return self.op.adjoint(r if self.sqrt_w is None else self.sqrt_w * r, ks)


def absorb_weights(ops, ys, weights=None) -> list[WeightedCamera]:
    weights = weights if weights is not None else [None] * len(ops)
    if not (len(ops) == len(ys) == len(weights)):
        raise ValueError("need one data array (and weight array) per camera")
    out = []
    for c, (op, y, w) in enumerate(zip(ops, ys, weights)):
        y = np.asarray(y, dtype=np.float64)
        if y.shape != tuple(op.image_shape):
            raise ValueError(f"camera {c}: data shape {y.shape} != image {op.image_shape}")
        sw = None
        if w is not None:
            w = np.asarray(w, dtype=np.float64)
            if w.shape != y.shape:
                raise ValueError(f"camera {c}: weight shape {w.shape} != data shape {y.shape}")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError(f"camera {c}: weights must be finite and nonnegative")
            sw = np.sqrt(w)
        out.append(WeightedCamera(op, y, sw))
    return out


def balanced_weights(ys) -> list[np.ndarray]:
    """Constant per-camera weights 1/mean(y^2), so every camera's data term starts at equal scale."""
    out = []
    for y in ys:
        y = np.asarray(y, dtype=np.float64)
        ms = float(np.mean(y * y))
        out.append(np.full(y.shape, 1.0 / ms if ms > 0 else 1.0))
    return out


# --- regularizer --------------------------------------------------------------------

@dataclass(frozen=True)
class QuadraticPotential:
    """psi(t) = t^2 / 2 (unit curvature)."""

    def value(self, t):
        return 0.5 * t * t

    def derivative(self, t):
        return t


def _pair_slices(shape, off):
    """Slices (a, b) so that x[a] and x[b] are neighbors at offset ``off``."""
    a, b = [], []
    for n, o in zip(shape, off):
        a.append(slice(max(0, -o), n - max(0, o)))
        b.append(slice(max(0, o), n - max(0, -o)))
    return tuple(a), tuple(b)


def regularizer(x: np.ndarray, beta: float, direction: str = "value",
                potential=QuadraticPotential()):
    """(beta/2) sum_j sum_{l in N_j} psi(x_j - x_l) over in-grid 26-neighbors."""
    x = np.asarray(x, dtype=np.float64)
    if direction == "value":
        total = 0.0
        for off in NEIGHBOR_OFFSETS:
            a, b = _pair_slices(x.shape, off)
            total += float(np.sum(potential.value(x[a] - x[b])))
        return beta * total
    if direction == "gradient":
        g = np.zeros_like(x)
        for off in NEIGHBOR_OFFSETS:
            a, b = _pair_slices(x.shape, off)
            d = potential.derivative(x[a] - x[b])
            g[a] += d
            g[b] -= d
        return beta * g
    raise ValueError(f"unknown direction {direction!r}")


def regularizer_hessian_apply(v: np.ndarray, beta: float) -> np.ndarray:
    """Hessian of the quadratic-potential regularizer applied to ``v``."""
    return regularizer(v, beta, "gradient")


# --- problem -----------------------------------------------------------------------

@dataclass(eq=False)
class ReconProblem:
    cameras: list[WeightedCamera]
    beta: float = 0.0
    nu: float = 0.0
    n_subset: int = 1
    reg_curvature: float = 26.0   # regularizer bound used in the majorizer
    potential: object = field(default_factory=QuadraticPotential)

    def __post_init__(self):
        if not self.cameras:
            raise ValueError("need at least one camera")
        if self.beta < 0 or self.nu < 0:
            raise ValueError("beta and nu must be nonnegative")
        if self.n_subset < 1:
            raise ValueError("n_subset must be >= 1")
        shapes = {tuple(c.op.volume_shape) for c in self.cameras}
        if len(shapes) != 1:
            raise ValueError(f"cameras disagree on the volume shape: {shapes}")
        for i, cam in enumerate(self.cameras):
            if not np.any(cam.y_tilde):
                raise ValueError(f"camera {i}: weighted data is identically zero")

    @property
    def volume_shape(self) -> tuple[int, int, int]:
        return tuple(self.cameras[0].op.volume_shape)


def estimate_gain(cam: WeightedCamera, ax: np.ndarray) -> float:
    """argmin_g 1/2 |A x - g y|^2 given the weighted projection ``ax`` = A_tilde x."""
    y = cam.y_tilde
    yy = float(np.vdot(y, y))
    if yy <= 0:
        raise ValueError("camera data has zero norm; gain is undefined")
    return float(np.vdot(y, ax)) / yy


def estimate_gains(problem: ReconProblem, projections) -> list[float]:
    return [1.0] + [estimate_gain(c, p) for c, p in zip(problem.cameras[1:], projections[1:])]


def project_all(problem: ReconProblem, x) -> list[np.ndarray]:
    return [cam.forward(x) for cam in problem.cameras]


def cost(problem: ReconProblem, x, gains, projections=None) -> float:
    if projections is None:
        projections = project_all(problem, x)
    total = 0.0
    for cam, g, ax in zip(problem.cameras, gains, projections):
        r = ax - g * cam.y_tilde
        total += 0.5 * float(np.vdot(r, r))
    x = np.asarray(x, dtype=np.float64)
    total += problem.nu * float(np.sum(np.abs(x)))
    if problem.beta:
        total += regularizer(x, problem.beta, "value", problem.potential)
    return total


# --- gradients -----------------------------------------------------------------------

@dataclass(frozen=True)
class SubsetSchedule:
    K: int
    n_subset: int

    def __post_init__(self):
        if not 1 <= self.n_subset <= self.K:
            raise ValueError(f"n_subset must be in [1, K={self.K}]")

    def subset(self, n: int) -> np.ndarray:
        """Every n_subset-th view in lexicographic order, starting at view n."""
        return np.arange(n % self.n_subset, self.K, self.n_subset)

    def subsets(self) -> list[np.ndarray]:
        return [self.subset(n) for n in range(self.n_subset)]


def data_gradient(problem: ReconProblem, x, gains, subset=None) -> np.ndarray:
    """Exact data-fit gradient, or its subset approximation with both K/|S| factors."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros(problem.volume_shape)
    for cam, gamma in zip(problem.cameras, gains):
        ks = np.arange(cam.K) if subset is None else np.asarray(subset)
        if ks.size == 0:
            raise ValueError("empty view subset")
        scale = cam.K / ks.size
        r = scale * cam.forward(x, ks) - gamma * cam.y_tilde
        g += scale * cam.adjoint(r, ks)
    return g


def subset_terms(problem: ReconProblem, x, gains, schedule: SubsetSchedule) -> list[np.ndarray]:
    """Per-subset backprojections of the exact residual (no K/|S| factors).

    Their sum is the exact data-fit gradient.
    """
    x = np.asarray(x, dtype=np.float64)
    res = [cam.forward(x) - g * cam.y_tilde for cam, g in zip(problem.cameras, gains)]
    terms = []
    for ks in schedule.subsets():
        t = np.zeros(problem.volume_shape)
        for cam, r in zip(problem.cameras, res):
            t += cam.adjoint(r, ks)
        terms.append(t)
    return terms


def majorizer_diag(problem: ReconProblem) -> np.ndarray:
    """d = sum_c A_c^T A_c 1 + reg_curvature * beta, floored at EPS_MAJORIZER."""
    ones = np.ones(problem.volume_shape)
    d = np.zeros(problem.volume_shape)
    for cam in problem.cameras:
        d += cam.adjoint(cam.forward(ones))
    d += problem.reg_curvature * problem.beta
    return np.maximum(d, EPS_MAJORIZER)


def prox_step(z, grad, d, nu: float) -> np.ndarray:
    """argmin_{x>=0} 1/2 d (x-z)^2 + grad (x-z) + nu x, per coordinate."""
    return np.maximum(0.0, z - (grad + nu) / d)


# --- FISTA -----------------------------------------------------------------------------

@dataclass(eq=False)
class ReconState:
    x: np.ndarray
    z: np.ndarray
    t: float
    gains: list[float]
    cost_history: list[float] = field(default_factory=list)
    iterations: int = 0
    restarts: int = 0
    stopped: str = ""


@dataclass
class StepInfo:
    """Passed to step callbacks after every accepted-or-not iterate update."""

    iteration: int
    z: np.ndarray
    x_new: np.ndarray
    grad: np.ndarray      # full objective gradient at z (data + regularizer)
    gains: list[float]
    majorizer: np.ndarray
    full_gradient: bool


def _check_finite(name, value, state):
    if not np.all(np.isfinite(value)):
        raise NumericalError(
            f"non-finite {name} at iteration {state.iterations} "
            f"(gains={state.gains}, last cost={state.cost_history[-1:]})")


def fista_run(problem: ReconProblem, init=None, iters: int = 100,
              callbacks: list[Callable] | None = None, restart: bool = True,
              momentum: bool = True, log_every: int = 0,
              log_sink: Callable[[dict], None] | None = None) -> ReconState:
    """Run ``iters`` outer iterations (full passes over all subsets).

    Gains are re-estimated from the current iterate once per outer iteration
    and held fixed for that pass. The exact cost is evaluated after every
    pass; if it increased the pass is rejected and momentum restarts.
    ``momentum=False`` gives the plain projected (majorized) gradient method.
    """
    shape = problem.volume_shape
    x = np.zeros(shape) if init is None else np.array(init, dtype=np.float64).reshape(shape)
    if np.any(x < 0):
        raise ValueError("initial volume must be nonnegative")
    d = majorizer_diag(problem)
    K = min(c.K for c in problem.cameras)
    n_subset = problem.n_subset
    proj = project_all(problem, x)
    gains = estimate_gains(problem, proj)
    state = ReconState(x=x, z=x.copy(), t=1.0, gains=gains)
    state.cost_history.append(cost(problem, x, gains, proj))
    callbacks = callbacks or []
    clock = time.perf_counter()
    restarted_last = True

    proj_x = proj
    proj_z = proj
    for it in range(iters):
        schedule = SubsetSchedule(K, n_subset)
        x_prev, z, t = state.x, state.z, state.t
        x_new = x_prev
        grad_norm = 0.0
        mom = 0.0
        for n in range(n_subset):
            if n_subset == 1:
                # exact gradient from the cached projection of z
                grad = np.zeros(shape)
                for cam, g, pz in zip(problem.cameras, state.gains, proj_z):
                    grad += cam.adjoint(pz - g * cam.y_tilde)
            else:
                grad = data_gradient(problem, z, state.gains, schedule.subset(n))
            if problem.beta:
                grad = grad + regularizer(z, problem.beta, "gradient", problem.potential)
            _check_finite("gradient", grad, state)
            grad_norm = float(np.linalg.norm(grad))
            x_new = prox_step(z, grad, d, problem.nu)
            for cb in callbacks:
                cb(StepInfo(it, z, x_new, grad, list(state.gains), d, n_subset == 1))
            if momentum:
                t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
                mom = (t - 1.0) / t_new
                z = x_new + mom * (x_new - x_prev)
                t = t_new
            else:
                z = x_new
            x_prev = x_new
        state.iterations = it + 1
        proj = project_all(problem, x_new)
        gains_new = estimate_gains(problem, proj)
        c_new = cost(problem, x_new, gains_new, proj)
        if not math.isfinite(c_new):
            raise NumericalError(f"non-finite cost at iteration {it + 1} (gains={gains_new})")
        if restart and c_new > state.cost_history[-1]:
            state.restarts += 1
            if restarted_last:
                if n_subset > 1:
                    # subset noise dominates: continue with exact gradients
                    n_subset = 1
                else:
                    state.stopped = "no further decrease"
                    break
            state.z, state.t = state.x.copy(), 1.0
            proj_z = proj_x
            restarted_last = True
            continue
        restarted_last = False
        proj_z = [p + mom * (p - q) for p, q in zip(proj, proj_x)] if n_subset == 1 else None
        proj_x = proj
        state.x, state.z, state.t, state.gains = x_new, z, t, gains_new
        state.cost_history.append(c_new)
        if log_every and (it + 1) % log_every == 0:
            rec = {"iter": it + 1, "cost": c_new, "gains": gains_new,
                   "grad_norm": grad_norm, "seconds": time.perf_counter() - clock}
            log.info(json.dumps(rec))
            if log_sink:
                log_sink(rec)
    return state


def projected_gradient_run(problem: ReconProblem, init=None, iters: int = 100,
                           callbacks=None) -> ReconState:
    """Unaccelerated baseline: the same majorized step without momentum."""
    return fista_run(problem, init, iters, callbacks, restart=True, momentum=False)
