import math

import numpy as np
import pytest

from lftomo import presets
from lftomo.camera import (AngularConfig, CameraConfig, DetectorConfig, LensLayout, Pose,
                           build_camera, build_plenoptic, build_single_lens, camera_apply,
                           scene_plane)
from lftomo.dense import transport_matrix
from lftomo.lightfield import LightFieldCoeffs, PlaneGeometry, basis_volume
from lftomo.optics import compose_all, make_refraction, make_translation
from lftomo.transport import counting, make_transport, serial_execution


def scene_planes(n=4, spacing=0.5, distances=(299.5, 300.5)):
    return [scene_plane(n, n, spacing, spacing, d, 50.0) for d in distances]


def random_fields(chain, rng):
    return [LightFieldCoeffs(p, rng.normal(size=(chain.angular.K,) + p.shape))
            for p in chain.scene_planes]


def dot_gap(chain, rng):
    f = random_fields(chain, rng)
    y = rng.normal(size=chain.image_shape).astype(np.float32)
    ax = camera_apply(chain, f).astype(np.float64)
    aty = camera_apply(chain, y, "adjoint")
    lhs = np.vdot(ax, y)
    rhs = sum(np.vdot(a.views.astype(np.float64), b.views) for a, b in zip(f, aty))
    return abs(lhs - rhs) / (np.linalg.norm(ax) * np.linalg.norm(y))


# --- single lens --------------------------------------------------------------

def test_in_focus_point_images_at_magnification():
    cfg = presets.single_lens_camera(k=4)
    plane = scene_plane(16, 16, 0.5, 0.5, 300.0, 50.0)
    chain = build_single_lens(cfg, [plane])
    for i_s, i_t in ((12, 8), (3, 5), (8, 8)):
        views = np.zeros((1, 16, 16))
        views[0, i_t, i_s] = 1.0
        img = chain.forward_views([views])
        cs, ct = chain.detector.centers("s"), chain.detector.centers("t")
        cen_s = float((img.sum(axis=0) * cs).sum() / img.sum())
        cen_t = float((img.sum(axis=1) * ct).sum() / img.sum())
        s0, t0 = plane.centers("s")[i_s], plane.centers("t")[i_t]
        pitch = cfg.detector.pitch_mm
        assert abs(cen_s - (-0.2 * s0)) <= pitch
        assert abs(cen_t - (-0.2 * t0)) <= pitch
        # localized: all energy within a few pixels of the centroid
        ss, tt = np.meshgrid(cs, ct)
        r = np.hypot(ss - cen_s, tt - cen_t)
        assert img[r > 3 * pitch].sum() <= 1e-9 * img.sum()


def test_single_lens_linearity_and_zero(rng):
    chain = build_single_lens(presets.tiny_single(), scene_planes())
    f, g = random_fields(chain, rng), random_fields(chain, rng)
    zero = [LightFieldCoeffs.zeros(p, chain.angular.K) for p in chain.scene_planes]
    assert not np.any(camera_apply(chain, zero))
    both = [LightFieldCoeffs(a.plane, a.views + b.views) for a, b in zip(f, g)]
    lhs = camera_apply(chain, both)
    rhs = camera_apply(chain, f) + camera_apply(chain, g)
    assert np.allclose(lhs, rhs, atol=1e-5 * np.abs(rhs).max())
    twice = [LightFieldCoeffs(a.plane, 2 * a.views) for a in f]
    assert np.allclose(camera_apply(chain, twice), 2 * camera_apply(chain, f), rtol=1e-6)


def test_single_lens_matches_dense(rng):
    chain = build_single_lens(presets.tiny_single(k=2, n_det=8), scene_planes(n=3))
    f = random_fields(chain, rng)
    ref = np.zeros(chain.image_shape).ravel()
    for op, lf in zip(chain.ops, f):
        for k in range(chain.angular.K):
            ref += transport_matrix(op, k) @ lf.views[k].ravel()
    ref = math.sqrt(chain.detector_volume) * ref.reshape(chain.image_shape)
    assert np.max(np.abs(chain.forward_views([lf.views for lf in f]) - ref)) <= 1e-5


def test_single_lens_adjoint(rng):
    chain = build_single_lens(presets.tiny_single(), scene_planes())
    assert max(dot_gap(chain, rng) for _ in range(100)) <= 1e-4


def test_invalid_single_lens():
    cfg = presets.tiny_single()
    from dataclasses import replace
    with pytest.raises(ValueError):
        build_single_lens(replace(cfg, D_mm=-5.0), scene_planes())
    with pytest.raises(ValueError):
        build_single_lens(presets.tiny_plenoptic(), scene_planes())
    with pytest.raises(ValueError):
        build_camera(replace(cfg, type="pinhole"), scene_planes())


def test_geometry_mismatch_rejected(rng):
    chain = build_single_lens(presets.tiny_single(), scene_planes())
    wrong = [LightFieldCoeffs.zeros(PlaneGeometry(5, 5, 0.5, 0.5, to_angular=p.to_angular),
                                    chain.angular.K) for p in chain.scene_planes]
    with pytest.raises(ValueError):
        camera_apply(chain, wrong)
    with pytest.raises(ValueError):
        camera_apply(chain, np.zeros((3, 3)), "adjoint")


# --- plenoptic ----------------------------------------------------------------

def dense_plenoptic(chain, fields):
    """Explicit matrices for every stage, each lenslet transported over the whole
    array and detector planes and then restricted to its own pixels."""
    cfg = chain.cfg
    det, arr = chain.detector, chain.array
    mag = (cfg.D_mu_m_mm + cfg.D_d_mu_mm) / cfg.D_mu_m_mm
    centers = cfg.lens_layout.centers()
    # owners recomputed by brute force
    def owner_of(cs, ct, pts):
        tt, ss = np.meshgrid(ct, cs, indexing="ij")
        d = [np.hypot(ss - a, tt - b) for a, b in pts]
        return np.argmin(np.stack(d), axis=0).ravel()
    arr_owner = owner_of(arr.centers("s"), arr.centers("t"), centers)
    det_owner = owner_of(det.centers("s"), det.centers("t"), centers * mag)
    m = chain.mask.values.ravel()
    y = np.zeros(det.shape).ravel()
    for k in range(chain.angular.K):
        on_arr = sum(transport_matrix(make_transport(p, arr, chain.angular), k) @ lf.views[k].ravel()
                     for p, lf in zip(chain.scene_planes, fields))
        on_arr = m * on_arr
        for mu, (cs, ct) in enumerate(centers):
            to_ang = compose_all(make_translation(cfg.D_mu_m_mm),
                                 make_refraction(cfg.f_mu_mm, cs, ct),
                                 make_translation(cfg.D_d_mu_mm))
            dplane = PlaneGeometry(det.n_s, det.n_t, det.delta_s, det.delta_t, to_angular=to_ang)
            op = make_transport(arr, dplane, chain.angular)
            vd = basis_volume(dplane, chain.angular)
            out = transport_matrix(op, k) @ (on_arr * (arr_owner == mu))
            y += math.sqrt(vd) * out * (det_owner == mu)
    return y.reshape(det.shape)


def test_tiny_plenoptic_matches_dense(rng):
    cfg = presets.tiny_plenoptic()
    chain = build_plenoptic(cfg, scene_planes(n=4))
    assert chain.image_shape == (24, 24) and chain.n_lenslets == 9 and chain.angular.K == 4
    f = random_fields(chain, rng)
    fast = chain.forward_views([lf.views for lf in f])
    ref = dense_plenoptic(chain, f)
    assert np.max(np.abs(fast - ref)) <= 1e-5 * max(1.0, np.abs(ref).max())
    assert np.abs(ref).max() > 0


def test_one_lenslet_open_mask_is_two_stage_relay(rng):
    from dataclasses import replace
    cfg = presets.tiny_plenoptic()
    cfg = replace(cfg, lens_layout=replace(cfg.lens_layout, n_s=1, n_t=1),
                  detector=replace(cfg.detector, n_s=8, n_t=8))
    planes = scene_planes(n=3)
    probe = build_plenoptic(cfg, planes)
    chain = build_plenoptic(cfg, planes, mask_values=np.ones(probe.array.shape))
    f = random_fields(chain, rng)
    relay = PlaneGeometry(8, 8, cfg.detector.pitch_mm, cfg.detector.pitch_mm,
                          to_angular=compose_all(make_translation(cfg.D_mu_m_mm),
                                                 make_refraction(cfg.f_mu_mm),
                                                 make_translation(cfg.D_d_mu_mm)))
    first = [make_transport(p, chain.array, chain.angular) for p in planes]
    second = make_transport(chain.array, relay, chain.angular)
    ref = np.zeros(64)
    for k in range(chain.angular.K):
        mid = sum(transport_matrix(op, k) @ lf.views[k].ravel() for op, lf in zip(first, f))
        ref += transport_matrix(second, k) @ mid
    ref = math.sqrt(second.dst_volume) * ref.reshape(8, 8)
    assert np.max(np.abs(chain.forward_views([lf.views for lf in f]) - ref)) <= 1e-5


def test_all_blocking_mask_gives_zero_image(rng):
    cfg = presets.tiny_plenoptic()
    probe = build_plenoptic(cfg, scene_planes())
    chain = build_plenoptic(cfg, scene_planes(), mask_values=np.zeros(probe.array.shape))
    assert not np.any(camera_apply(chain, random_fields(chain, rng)))


def test_mask_zero_outside_lenslet_apertures():
    cfg = presets.tiny_plenoptic(layout="hex")
    chain = build_plenoptic(cfg, scene_planes())
    m = chain.mask.values
    cs, ct = chain.array.centers("s"), chain.array.centers("t")
    tt, ss = np.meshgrid(ct, cs, indexing="ij")
    centers = cfg.lens_layout.centers()
    inside = np.zeros(m.shape, bool)
    for a, b in centers:
        inside |= np.hypot(ss - a, tt - b) <= 0.5 * cfg.lens_layout.pitch_mm + 1e-12
    assert np.array_equal(m > 0, inside)


@pytest.mark.parametrize("layout", ["rect", "hex"])
def test_plenoptic_adjoint(layout, rng):
    chain = build_plenoptic(presets.tiny_plenoptic(layout=layout), scene_planes())
    assert max(dot_gap(chain, rng) for _ in range(100)) <= 1e-4


def test_factored_count_and_agreement(rng):
    chain = build_plenoptic(presets.tiny_plenoptic(n_lens=3), scene_planes(distances=(299, 300, 301)))
    views = [lf.views for lf in random_fields(chain, rng)]
    with counting() as c:
        fac = chain.forward_views(views)
    K, n_z, n_mu = chain.angular.K, 3, chain.n_lenslets
    assert c.transport_applications == K * (n_z + n_mu)
    with counting() as c:
        unf = chain.forward_views_unfactored(views)
    assert c.transport_applications == K * n_z * (1 + n_mu)
    assert np.max(np.abs(fac - unf)) <= 1e-5


def test_shipped_geometry_has_negligible_crosstalk():
    chain = build_plenoptic(presets.plenoptic_camera(k=2, n_lens=4), scene_planes())
    assert chain.crosstalk_fraction() < 1e-3


def test_render_bitwise_deterministic(rng):
    chain = build_plenoptic(presets.tiny_plenoptic(k=3), scene_planes())
    f = random_fields(chain, rng)
    with serial_execution():
        a = camera_apply(chain, f)
        b = camera_apply(chain, f)
    c = camera_apply(chain, f)
    assert np.array_equal(a, b) and np.array_equal(a, c)


def test_config_round_trip_and_unknown_keys():
    for cfg in presets.three_camera_setup():
        assert CameraConfig.from_dict(cfg.to_dict()) == cfg
    d = presets.tiny_single().to_dict()
    d["bogus"] = 1
    with pytest.raises(ValueError):
        CameraConfig.from_dict(d)
    cfg = CameraConfig("plenoptic", 50.0, DetectorConfig(8, 8, 0.1), AngularConfig(2, 2),
                       Pose(), None, 66.0, 2.0, 1.5, LensLayout(n_s=1, n_t=1))
    assert CameraConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        LensLayout(kind="triangle").centers()
