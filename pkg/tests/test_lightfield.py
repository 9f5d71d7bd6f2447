import numpy as np
import pytest
from scipy import integrate

from lftomo.lightfield import (AngularBasis, AngularPlane, LightFieldCoeffs, PlaneGeometry,
                               basis_volume, eval_lightfield, load_lightfield, save_lightfield)
from lftomo.optics import Ray, apply, identity, invert, make_translation


def unit_jacobian_plane(delta_s=1.0, delta_t=1.0):
    # angular coordinate w = s + u, i.e. unit slope Jacobian
    return PlaneGeometry(3, 3, delta_s, delta_t, to_angular=make_translation(1.0))


def quad_axis_volume(dp, d0, xform_block):
    """Integral over the pixel and all slopes of the angular indicator, by quadrature."""
    m, o = xform_block

    def inner(s):
        # slope interval edges where the indicator switches, passed as breakpoints
        e = sorted(((sgn * d0 / 2 - o[0] - m[0, 0] * s) / m[0, 1]) for sgn in (-1, 1))
        lo, hi = e[0] - 1.0, e[1] + 1.0
        f = lambda u: float(abs(m[0, 0] * s + m[0, 1] * u + o[0]) <= d0 / 2)
        return integrate.quad(f, lo, hi, points=e, epsabs=1e-12, limit=200)[0]

    return integrate.quad(inner, -dp / 2, dp / 2, epsabs=1e-12)[0]


def test_grid_centers():
    p = PlaneGeometry(4, 3, 0.5, 2.0, center_s=1.0)
    assert np.allclose(p.centers("s"), [0.25, 0.75, 1.25, 1.75])
    assert np.allclose(p.centers("t"), [-2.0, 0.0, 2.0])


def test_invalid_geometry():
    with pytest.raises(ValueError):
        PlaneGeometry(0, 3, 1.0, 1.0)
    with pytest.raises(ValueError):
        PlaneGeometry(3, 3, -1.0, 1.0)
    with pytest.raises(ValueError):
        AngularPlane(0, 1, 1.0, 1.0)


def test_basis_volume_unit_and_scaled():
    ang = AngularPlane(1, 1, 1.0, 1.0, AngularBasis.PILLBOX)
    assert basis_volume(unit_jacobian_plane(), ang) == pytest.approx(1.0)
    p2 = unit_jacobian_plane(delta_s=2.0)
    v2 = basis_volume(p2, ang)
    assert v2 == pytest.approx(2.0)
    # quadrature of the 4D squared norm (separable: product of two 2D integrals)
    q = quad_axis_volume(2.0, 1.0, p2.to_angular.block("s")) * \
        quad_axis_volume(1.0, 1.0, p2.to_angular.block("t"))
    assert v2 == pytest.approx(q, rel=1e-6)


def test_basis_volume_quadrature_general_plane():
    to_ang = invert(make_translation(-250.0))
    p = PlaneGeometry(3, 3, 0.3, 0.7, to_angular=to_ang)
    ang = AngularPlane(2, 2, 3.0, 3.0)
    q = quad_axis_volume(0.3, 3.0, to_ang.block("s")) * quad_axis_volume(0.7, 3.0, to_ang.block("t"))
    assert basis_volume(p, ang) == pytest.approx(q, rel=1e-6)


def test_basis_volume_linear_in_spacing():
    ang = AngularPlane(2, 2, 1.5, 1.5)
    v1 = basis_volume(PlaneGeometry(3, 3, 0.4, 0.5, to_angular=make_translation(60)), ang)
    v2 = basis_volume(PlaneGeometry(3, 3, 1.2, 0.5, to_angular=make_translation(60)), ang)
    assert v2 == pytest.approx(3 * v1)


def test_basis_volume_degenerate():
    with pytest.raises(ValueError):
        basis_volume(PlaneGeometry(3, 3, 1.0, 1.0, to_angular=identity()), AngularPlane(1, 1, 1, 1))


def test_index_round_trip():
    p = PlaneGeometry(4, 3, 1.0, 1.0)
    lf = LightFieldCoeffs.zeros(p, 6)
    lf.set(5, 3, 2, 2.5)
    assert lf.get(5, 3, 2) == 2.5
    assert lf.flat().size == 6 * 4 * 3
    assert lf.flat()[5 * 12 + 2 * 4 + 3] == 2.5


def test_coeffs_must_be_finite():
    p = PlaneGeometry(2, 2, 1.0, 1.0)
    with pytest.raises(ValueError):
        LightFieldCoeffs(p, np.full((1, 2, 2), np.inf))


def _ray_for(plane, ang, k, i_s, i_t):
    """Ray through pixel center (i_s, i_t) that lands on angular center k."""
    s, t = plane.centers("s")[i_s], plane.centers("t")[i_t]
    ws, wt = ang.view_center(k)
    m, o = plane.to_angular.block("s")
    u = (ws - o[0] - m[0, 0] * s) / m[0, 1]
    m, o = plane.to_angular.block("t")
    v = (wt - o[0] - m[0, 0] * t) / m[0, 1]
    return Ray(s, u, t, v)


def test_eval_examples(rng):
    p = PlaneGeometry(4, 3, 0.5, 0.5, to_angular=make_translation(60.0))
    ang = AngularPlane.over_aperture(2, 2, 14.0)
    lf = LightFieldCoeffs.zeros(p, ang.K)
    ray = _ray_for(p, ang, 3, 1, 2)
    assert eval_lightfield(lf, ang, ray) == 0.0
    lf.set(3, 1, 2, 1.0)
    assert eval_lightfield(lf, ang, ray) == 1.0
    assert eval_lightfield(lf, ang, Ray(50.0, 0.0, 0.0, 0.0)) == 0.0
    # linearity at random rays
    f = LightFieldCoeffs(p, rng.normal(size=(4, 3, 4)))
    g = LightFieldCoeffs(p, rng.normal(size=(4, 3, 4)))
    h = LightFieldCoeffs(p, 2.0 * f.views - 0.5 * g.views)
    for _ in range(20):
        r = Ray(rng.uniform(-1, 1), rng.uniform(-0.1, 0.1), rng.uniform(-1, 1), rng.uniform(-0.1, 0.1))
        assert eval_lightfield(h, ang, r) == pytest.approx(
            2.0 * eval_lightfield(f, ang, r) - 0.5 * eval_lightfield(g, ang, r), abs=1e-5)


def test_angular_centers_inset():
    ang = AngularPlane.over_aperture(4, 2, 8.0)
    assert np.allclose(ang.view_centers("s")[:4], [-3, -1, 1, 3])
    assert ang.view_center(5) == pytest.approx((-1.0, 2.0))


def test_serialization_round_trip(tmp_path, rng):
    p = PlaneGeometry(5, 3, 0.25, 0.5)
    ang = AngularPlane.over_aperture(2, 3, 10.0, AngularBasis.DIRAC)
    lf = LightFieldCoeffs(p, rng.normal(size=(6, 3, 5)))
    save_lightfield(tmp_path / "lf.raw", lf, ang)
    assert (tmp_path / "lf.raw").stat().st_size == 6 * 15 * 4
    back, ang2 = load_lightfield(tmp_path / "lf.raw")
    assert np.array_equal(back.views, lf.views)
    assert ang2 == ang
