import math

import numpy as np
import pytest

from lftomo.metrics import fwhm, line_profile, nrmse, nsd
from lftomo.phantom import (Cylinder, PhantomSpec, Pronged, Sphere, hub_center, hub_index,
                            pronged_phantom, rasterize)

DELTA = (1.0, 1.0, 1.0)


def test_empty_spec_zero_volume():
    assert not np.any(rasterize(PhantomSpec([]), (8, 8, 8), DELTA).data)


def test_sphere_mass_matches_analytic():
    vol = rasterize(PhantomSpec([Sphere((0.3, -0.2, 0.1), 5.0)]), (16, 16, 16), DELTA)
    assert vol.data.sum() == pytest.approx(4 / 3 * math.pi * 125, rel=0.02)


def test_disjoint_spheres_add():
    a, b = Sphere((-4.0, 0.0, 0.0), 2.5), Sphere((4.0, 1.0, 0.0), 2.0, intensity=2.0)
    both = rasterize(PhantomSpec([a, b]), (16, 12, 10), DELTA).data
    sep = rasterize(PhantomSpec([a]), (16, 12, 10), DELTA).data + \
        rasterize(PhantomSpec([b]), (16, 12, 10), DELTA).data
    assert np.allclose(both, sep)


def test_shape_outside_grid_rejected():
    with pytest.raises(ValueError):
        rasterize(PhantomSpec([Sphere((7.0, 0.0, 0.0), 2.0)]), (16, 16, 16), DELTA)


def test_cylinder_volume():
    cyl = Cylinder((-5.0, 0.0, 0.0), (5.0, 0.0, 0.0), 3.0)
    vol = rasterize(PhantomSpec([cyl]), (16, 16, 16), DELTA, supersample=4)
    assert vol.data.sum() == pytest.approx(math.pi * 9 * 10, rel=0.03)


def test_spec_from_dict():
    spec = PhantomSpec.from_dict({"shapes": [
        {"kind": "sphere", "center": [0, 0, 0], "radius": 2},
        {"kind": "pronged", "center": [0, 1, 0], "n_prongs": 3}]})
    assert isinstance(spec.shapes[0], Sphere) and isinstance(spec.shapes[1], Pronged)
    with pytest.raises(ValueError):
        PhantomSpec.from_dict({"shapes": [{"kind": "torus"}]})


def test_pronged_phantom_structure():
    vol = pronged_phantom((32, 32, 32), (0.5, 0.5, 0.5))
    ix, iy, iz = hub_index((32, 32, 32))
    assert vol.data[iz, iy, ix] == pytest.approx(1.0)
    assert vol.data.max() <= 1.0 + 1e-6   # parts union, not add
    c = hub_center((32, 32, 32), (0.5, 0.5, 0.5))
    assert c == pytest.approx((0.25, 0.75, 0.25))
    # four prongs rise above the hub
    above = vol.data[:, iy + 6, :]
    assert above.sum() > 0 and vol.data[:, :iy - 2, :].sum() > 0


def test_nsd_examples(rng):
    ref = rng.normal(size=(5, 6))
    assert nsd(ref, ref) == 0.0
    assert nsd(ref, 2 * ref) == pytest.approx(1.0)
    assert nsd(ref, np.zeros_like(ref)) == pytest.approx(1.0)
    assert nrmse(ref, 1.5 * ref) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        nsd(ref, ref[:4])
    with pytest.raises(ValueError):
        nsd(np.zeros(3), np.ones(3))


def test_fwhm_gaussian():
    x = np.arange(64) - 31.3
    sigma = 4.0
    p = np.exp(-x ** 2 / (2 * sigma ** 2))
    assert fwhm(p, 0.5) == pytest.approx(2 * math.sqrt(2 * math.log(2)) * sigma * 0.5, rel=0.01)
    with pytest.raises(ValueError):
        fwhm(np.zeros(5))


def test_line_profile(rng):
    v = rng.random((4, 5, 6))
    assert np.array_equal(line_profile(v, "x", (1, 2, 3)), v[3, 2, :])
    assert np.array_equal(line_profile(v, "y", (1, 2, 3)), v[3, :, 1])
    assert np.array_equal(line_profile(v, "z", (1, 2, 3)), v[:, 2, 1])
