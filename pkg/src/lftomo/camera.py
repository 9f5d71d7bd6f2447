"""Single-lens and plenoptic camera models built from transport stages.

Both cameras put the angular plane on the main lens. A camera is compiled
against the list of scene planes it will see (one per volume slice) and then
applied repeatedly. Slopes follow the convention in which the detector-to-lens
map is ``T_D`` and a scene plane at distance ``D_scene`` maps to the lens
through ``(T_Dscene o R_fmain)^-1``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .lightfield import AngularBasis, AngularPlane, LightFieldCoeffs, PlaneGeometry, grid_centers
from .optics import (block_dets, compose, compose_all, invert, make_refraction,
                     make_translation)
from .transport import (OccluderMask, TransportOp, make_transport, reverse_transport,
                        transport_views)


# --- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class DetectorConfig:
    n_s: int
    n_t: int
    pitch_mm: float


@dataclass(frozen=True)
class AngularConfig:
    k_s: int
    k_t: int
    basis: str = "pillbox"
    aperture_mm: float = 14.0

    def plane(self) -> AngularPlane:
        return AngularPlane.over_aperture(self.k_s, self.k_t, self.aperture_mm,
                                          AngularBasis(self.basis))


@dataclass(frozen=True)
class Pose:
    yaw_deg: float = 0.0
    pitch_deg: float = 0.0
    roll_deg: float = 0.0
    distance_mm: float = 300.0


@dataclass(frozen=True)
class LensLayout:
    kind: str = "rect"            # "rect" | "hex"
    n_s: int = 3
    n_t: int = 3
    pitch_mm: float = 0.5
    diameter_mm: float | None = None   # aperture diameter; default = pitch
    array_samples: int = 8        # array-plane pixels per pitch

    def centers(self) -> np.ndarray:
        """(N_mu, 2) lenslet centers (s, t) on the array plane."""
        if self.kind == "rect":
            cs = grid_centers(self.n_s, self.pitch_mm)
            ct = grid_centers(self.n_t, self.pitch_mm)
            tt, ss = np.meshgrid(ct, cs, indexing="ij")
            return np.stack([ss.ravel(), tt.ravel()], axis=1)
        if self.kind == "hex":
            row = self.pitch_mm * math.sqrt(3) / 2
            ct = grid_centers(self.n_t, row)
            out = []
            for r, t in enumerate(ct):
                off = 0.25 * self.pitch_mm * (1 if r % 2 else -1)
                for s in grid_centers(self.n_s, self.pitch_mm):
                    out.append((s + off, t))
            return np.array(out)
        raise ValueError(f"unknown lens layout {self.kind!r}")


@dataclass(frozen=True)
class CameraConfig:
    type: str
    focal_main_mm: float
    detector: DetectorConfig
    angular: AngularConfig
    pose: Pose = field(default_factory=Pose)
    D_mm: float | None = None
    D_mu_m_mm: float | None = None
    D_d_mu_mm: float | None = None
    f_mu_mm: float | None = None
    lens_layout: LensLayout | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "CameraConfig":
        d = dict(d)
        d["detector"] = DetectorConfig(**d["detector"])
        d["angular"] = AngularConfig(**d["angular"])
        d["pose"] = Pose(**d.get("pose", {}))
        if d.get("lens_layout") is not None:
            d["lens_layout"] = LensLayout(**d["lens_layout"])
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown camera config keys {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: v for k, v in d.items() if v is not None}

    def with_angular(self, **changes) -> "CameraConfig":
        from dataclasses import replace
        return replace(self, angular=replace(self.angular, **changes))

    def detector_plane(self) -> PlaneGeometry:
        det = self.detector
        if self.type == "single":
            to_ang = make_translation(self.D_mm)
        else:
            to_ang = make_translation(self.D_mu_m_mm + self.D_d_mu_mm)
        return PlaneGeometry(det.n_s, det.n_t, det.pitch_mm, det.pitch_mm, to_angular=to_ang)


def scene_plane(n_s: int, n_t: int, delta_s: float, delta_t: float,
                distance: float, focal_main: float) -> PlaneGeometry:
    """Scene slice ``distance`` mm in front of the main lens."""
    to_ang = invert(compose(make_translation(distance), make_refraction(focal_main)))
    return PlaneGeometry(n_s, n_t, delta_s, delta_t, to_angular=to_ang)


def _check_unimodular(plane: PlaneGeometry):
    for det in block_dets(plane.to_angular):
        if abs(abs(det) - 1.0) > 1e-9:
            raise ValueError(f"camera transform is not unimodular (det={det})")


# --- single lens --------------------------------------------------------------

@dataclass(eq=False)
class SingleLensChain:
    cfg: CameraConfig
    angular: AngularPlane
    detector: PlaneGeometry
    scene_planes: list[PlaneGeometry]
    ops: list[TransportOp]
    _rev: list[TransportOp] | None = None

    @property
    def detector_volume(self) -> float:
        return self.ops[0].dst_volume

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.detector.shape

    @property
    def radiometric_scale(self) -> float:
        """sqrt(V_d): turns an image into the irradiance integral V_d sum_k f_k."""
        return math.sqrt(self.detector_volume)

    def reverse_ops(self) -> list[TransportOp]:
        if self._rev is None:
            self._rev = [reverse_transport(op) for op in self.ops]
        return self._rev

    def forward_views(self, scene_views: list[np.ndarray], ks=None) -> np.ndarray:
        """y = sqrt(V_d) sum_s sum_k (1/V_d) B^{ds}_k w^s_k.

        ``scene_views[s]`` is (K', n_t, n_s) or (1, n_t, n_s) when shared.
        """
        y = np.zeros(self.detector.shape)
        for op, w in zip(self.ops, scene_views):
            y += transport_views(op, w, ks).sum(axis=0)
        return y * math.sqrt(self.detector_volume)

    def adjoint_views(self, image: np.ndarray, ks=None) -> list[np.ndarray]:
        g = math.sqrt(self.detector_volume) * np.asarray(image, np.float64)[None]
        out = []
        n_views = self.angular.K if ks is None else len(ks)
        for op, rev in zip(self.ops, self.reverse_ops()):
            v = transport_views(rev, g, ks) * (op.src_volume / op.dst_volume)
            out.append(v if v.shape[0] == n_views else np.broadcast_to(v, (n_views,) + v.shape[1:]))
        return out


def build_single_lens(cfg: CameraConfig, scene_planes: list[PlaneGeometry]) -> SingleLensChain:
    if cfg.type != "single":
        raise ValueError("build_single_lens needs a 'single' camera config")
    if not (cfg.D_mm and cfg.D_mm > 0 and cfg.focal_main_mm > 0):
        raise ValueError("single lens camera needs D_mm > 0 and focal_main_mm > 0")
    angular = cfg.angular.plane()
    det = cfg.detector_plane()
    for p in [det, *scene_planes]:
        _check_unimodular(p)
    ops = [make_transport(p, det, angular) for p in scene_planes]
    return SingleLensChain(cfg, angular, det, list(scene_planes), ops)


# --- plenoptic ----------------------------------------------------------------

@dataclass(eq=False)
class Lenslet:
    center: tuple[float, float]
    array_box: tuple[int, int, int, int]      # i_s0, i_s1, i_t0, i_t1 on the array grid
    owner_box: np.ndarray                     # (n_t, n_s) bool: array pixels refracted by this lens
    detector_box: tuple[int, int, int, int]
    region_box: np.ndarray                    # (n_t, n_s) bool: detector pixels written by this lens
    op: TransportOp
    rev: TransportOp | None = None


@dataclass(eq=False)
class PlenopticChain:
    cfg: CameraConfig
    angular: AngularPlane
    detector: PlaneGeometry
    array: PlaneGeometry
    mask: OccluderMask
    scene_planes: list[PlaneGeometry]
    scene_ops: list[TransportOp]
    lenslets: list[Lenslet]
    _scene_rev: list[TransportOp] | None = None

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.detector.shape

    @property
    def n_lenslets(self) -> int:
        return len(self.lenslets)

    @property
    def radiometric_scale(self) -> float:
        """sqrt(V_mu); equal for every lenslet since the centers only shift offsets."""
        return math.sqrt(self.lenslets[0].op.dst_volume)

    def scene_reverse(self) -> list[TransportOp]:
        if self._scene_rev is None:
            self._scene_rev = [reverse_transport(op) for op in self.scene_ops]
        return self._scene_rev

    def array_to_detector(self, on_array: np.ndarray, ks=None) -> np.ndarray:
        """Masked array light field (K', n_t, n_s) -> image; one transport per lens and view."""
        masked = on_array * self.mask.values[None]
        y = np.zeros(self.detector.shape)
        for lens in self.lenslets:
            s0, s1, t0, t1 = lens.array_box
            sub = masked[:, t0:t1, s0:s1] * lens.owner_box[None]
            out = transport_views(lens.op, sub, ks).sum(axis=0)
            d0, d1, e0, e1 = lens.detector_box
            y[e0:e1, d0:d1] += np.where(lens.region_box, out, 0.0) * math.sqrt(lens.op.dst_volume)
        return y

    def detector_to_array(self, image: np.ndarray, ks=None) -> np.ndarray:
        n_views = self.angular.K if ks is None else len(ks)
        acc = np.zeros((n_views,) + self.array.shape)
        image = np.asarray(image, np.float64)
        for lens in self.lenslets:
            if lens.rev is None:
                lens.rev = reverse_transport(lens.op)
            d0, d1, e0, e1 = lens.detector_box
            g = np.where(lens.region_box, image[e0:e1, d0:d1], 0.0)
            g = g[None] * math.sqrt(lens.op.dst_volume)
            v = transport_views(lens.rev, g, ks) * (lens.op.src_volume / lens.op.dst_volume)
            s0, s1, t0, t1 = lens.array_box
            acc[:, t0:t1, s0:s1] += v * lens.owner_box[None]
        return acc * self.mask.values[None]

    def forward_views(self, scene_views: list[np.ndarray], ks=None) -> np.ndarray:
        """Factored order: all slices onto the array per view, then the lenslets."""
        n_views = self.angular.K if ks is None else len(ks)
        acc = np.zeros((n_views,) + self.array.shape)
        for op, w in zip(self.scene_ops, scene_views):
            acc += transport_views(op, w, ks)
        return self.array_to_detector(acc, ks)

    def forward_views_unfactored(self, scene_views: list[np.ndarray], ks=None) -> np.ndarray:
        """Reference order: every slice separately through every lenslet."""
        y = np.zeros(self.detector.shape)
        for op, w in zip(self.scene_ops, scene_views):
            y += self.array_to_detector(transport_views(op, w, ks), ks)
        return y

    def adjoint_views(self, image: np.ndarray, ks=None) -> list[np.ndarray]:
        acc = self.detector_to_array(image, ks)
        return [transport_views(rev, acc, ks) * (op.src_volume / op.dst_volume)
                for op, rev in zip(self.scene_ops, self.scene_reverse())]

    def crosstalk_fraction(self) -> float:
        """Energy fraction of a uniform array field that lands outside lens regions."""
        ones = np.ones((self.angular.K,) + self.array.shape)
        kept = self.array_to_detector(ones).sum()
        total = 0.0
        masked = ones * self.mask.values[None]
        for lens in self.lenslets:
            s0, s1, t0, t1 = lens.array_box
            sub = masked[:, t0:t1, s0:s1] * lens.owner_box[None]
            total += transport_views(lens.op, sub).sum() * math.sqrt(lens.op.dst_volume)
        return float(1.0 - kept / total) if total > 0 else 0.0


def _nearest_owner(points_s, points_t, centers) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest center and the distance to it, per grid point."""
    tt, ss = np.meshgrid(points_t, points_s, indexing="ij")
    d2 = (ss[..., None] - centers[:, 0]) ** 2 + (tt[..., None] - centers[:, 1]) ** 2
    owner = np.argmin(d2, axis=-1)
    return owner, np.sqrt(np.take_along_axis(d2, owner[..., None], -1)[..., 0])


def _bbox(sel: np.ndarray) -> tuple[int, int, int, int] | None:
    rows = np.flatnonzero(sel.any(axis=1))
    cols = np.flatnonzero(sel.any(axis=0))
    if rows.size == 0:
        return None
    return int(cols[0]), int(cols[-1]) + 1, int(rows[0]), int(rows[-1]) + 1


def rasterize_lenslet_mask(array: PlaneGeometry, layout: LensLayout,
                           centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Binary aperture mask on the array grid and the owning lenslet per pixel.

    A pixel is open when its center lies inside the nearest lenslet's circular
    aperture (diameter defaults to the pitch; rectangular layouts with no
    diameter use full square cells).
    """
    owner, dist = _nearest_owner(array.centers("s"), array.centers("t"), centers)
    if layout.diameter_mm is None and layout.kind == "rect":
        cs, ct = array.centers("s"), array.centers("t")
        half = 0.5 * layout.pitch_mm
        inside = ((np.abs(cs[None, :] - centers[owner, 0]) <= half + 1e-12)
                  & (np.abs(ct[:, None] - centers[owner, 1]) <= half + 1e-12))
    else:
        radius = 0.5 * (layout.diameter_mm or layout.pitch_mm)
        inside = dist <= radius + 1e-12
    return inside.astype(np.float32), np.where(inside, owner, -1)


def build_plenoptic(cfg: CameraConfig, scene_planes: list[PlaneGeometry],
                    mask_values: np.ndarray | None = None) -> PlenopticChain:
    if cfg.type != "plenoptic":
        raise ValueError("build_plenoptic needs a 'plenoptic' camera config")
    for name in ("D_mu_m_mm", "D_d_mu_mm", "f_mu_mm"):
        if not getattr(cfg, name):
            raise ValueError(f"plenoptic camera needs {name}")
    if cfg.D_mu_m_mm <= 0 or cfg.D_d_mu_mm <= 0 or cfg.focal_main_mm <= 0:
        raise ValueError("plenoptic distances and focal length must be positive")
    layout = cfg.lens_layout or LensLayout()
    centers = layout.centers()
    if len(centers) < 1:
        raise ValueError("need at least one microlens")
    angular = cfg.angular.plane()
    det = cfg.detector_plane()

    to_array = make_translation(cfg.D_mu_m_mm)
    span_s = np.ptp(centers[:, 0]) + layout.pitch_mm
    span_t = np.ptp(centers[:, 1]) + layout.pitch_mm
    da = layout.pitch_mm / layout.array_samples
    array = PlaneGeometry(int(math.ceil(span_s / da - 1e-9)), int(math.ceil(span_t / da - 1e-9)),
                          da, da, center_s=float(np.mean(centers[:, 0])),
                          center_t=float(np.mean(centers[:, 1])), to_angular=to_array)
    open_mask, owner = rasterize_lenslet_mask(array, layout, centers)
    if mask_values is not None:
        mask_values = np.asarray(mask_values, np.float32)
        if mask_values.shape != array.shape:
            raise ValueError("mask override has the wrong shape")
        open_mask = mask_values
    mask = OccluderMask(array, open_mask)

    # detector partition: nearest chief-ray image of each lenslet center
    mag = (cfg.D_mu_m_mm + cfg.D_d_mu_mm) / cfg.D_mu_m_mm
    det_owner, _ = _nearest_owner(det.centers("s"), det.centers("t"), centers * mag)
    covered = np.zeros(det.shape, dtype=np.int32)

    for p in [det, *scene_planes]:
        _check_unimodular(p)
    scene_ops = [make_transport(p, array, angular) for p in scene_planes]

    lenslets = []
    for mu, (cs, ct) in enumerate(centers):
        own = owner == mu
        abox = _bbox(own)
        region = det_owner == mu
        dbox = _bbox(region)
        if abox is None or dbox is None:
            continue
        covered += region
        refract = make_refraction(cfg.f_mu_mm, cs, ct)
        to_ang = compose_all(to_array, refract, make_translation(cfg.D_d_mu_mm))
        s0, s1, t0, t1 = abox
        d0, d1, e0, e1 = dbox
        src = array.subgrid(s0, s1, t0, t1)
        dst = PlaneGeometry(det.n_s, det.n_t, det.delta_s, det.delta_t,
                            to_angular=to_ang).subgrid(d0, d1, e0, e1)
        _check_unimodular(dst)
        lenslets.append(Lenslet(
            center=(float(cs), float(ct)), array_box=abox, owner_box=own[t0:t1, s0:s1],
            detector_box=dbox, region_box=region[e0:e1, d0:d1],
            op=make_transport(src, dst, angular)))
    if np.any(covered > 1):
        raise ValueError("lenslet detector regions overlap")
    return PlenopticChain(cfg, angular, det, array, mask, list(scene_planes), scene_ops, lenslets)


def build_camera(cfg: CameraConfig, scene_planes: list[PlaneGeometry]):
    if cfg.type == "single":
        return build_single_lens(cfg, scene_planes)
    if cfg.type == "plenoptic":
        return build_plenoptic(cfg, scene_planes)
    raise ValueError(f"unknown camera type {cfg.type!r}")


def camera_apply(chain, scene_fields, direction: str = "forward"):
    """Forward: list of scene LightFieldCoeffs -> image. Adjoint: image -> list."""
    if direction == "forward":
        views = []
        for lf, plane in zip(scene_fields, chain.scene_planes):
            if not lf.plane.same_grid(plane):
                raise ValueError("scene light field does not match the camera's scene plane")
            views.append(lf.views)
        if len(views) != len(chain.scene_planes):
            raise ValueError("one scene light field per scene plane is required")
        return chain.forward_views(views).astype(np.float32)
    if direction == "adjoint":
        image = np.asarray(scene_fields)
        if image.shape != chain.image_shape:
            raise ValueError("image shape does not match the detector")
        return [LightFieldCoeffs(p, v.astype(np.float32))
                for p, v in zip(chain.scene_planes, chain.adjoint_views(image))]
    raise ValueError(f"unknown direction {direction!r}")
