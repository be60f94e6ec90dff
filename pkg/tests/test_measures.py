import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from vadblab.errors import UsageError
from vadblab.families import cinched_sphere, disk_blowup, disk_blowup_volume_bounds, torus_bubble
from vadblab.measures import boundary_area, restricted_volume, volume
from vadblab.metric_core import ConformalMetric, ModelManifold


def quintic(s):
    s = min(max(s, 0.0), 1.0)
    return 10 * s**3 - 15 * s**4 + 6 * s**5


def blowup_f(r, alpha, j):
    peak = j**alpha
    return peak if r <= 1 / j else peak + (1 - peak) * quintic((r - 1 / j) * j)


def test_flat_disk_volume(flat_disk):
    assert volume(flat_disk).value == pytest.approx(math.pi, abs=1e-6)


def test_constant_four_volume(disk):
    assert volume(ConformalMetric.flat(disk, 4.0)).value == pytest.approx(4 * math.pi, abs=1e-6)


def test_blowup_volume_radial_oracle():
    j = 100
    v = volume(disk_blowup(2, 0.25, j)).value
    oracle, _ = integrate.quad(lambda rho: blowup_f(1 - rho, 0.25, j) ** 2 * rho, 0, 1,
                               points=[1 - 2 / j, 1 - 1 / j], epsabs=1e-13, limit=200)
    oracle *= 2 * math.pi
    assert math.pi <= v <= 4.33
    assert v == pytest.approx(oracle, abs=1e-3)


@pytest.mark.parametrize("j", [4, 16, 64, 256])
def test_blowup_volume_sandwich(j):
    lo, hi = disk_blowup_volume_bounds(2, 0.25, j)
    v = volume(disk_blowup(2, 0.25, j)).value
    assert lo <= v <= hi


def test_flat_disk_area(flat_disk):
    assert boundary_area(flat_disk).value == pytest.approx(2 * math.pi, abs=1e-9)


def test_blowup_area():
    assert boundary_area(disk_blowup(2, 0.25, 16)).value == pytest.approx(4 * math.pi, rel=1e-9)


def test_annulus_area():
    g = ConformalMetric.flat(ModelManifold.annulus(1.0, 2.0))
    assert boundary_area(g).value == pytest.approx(6 * math.pi, abs=1e-9)


@pytest.mark.parametrize("kind", ["sphere", "torus"])
def test_area_without_boundary(kind):
    base = getattr(ModelManifold, kind)(2)
    with pytest.raises(UsageError, match=kind):
        boundary_area(ConformalMetric.flat(base))


def test_reference_volumes():
    assert volume(ConformalMetric.flat(ModelManifold.sphere(2))).value == pytest.approx(4 * math.pi)
    assert volume(ConformalMetric.flat(ModelManifold.torus(2))).value == pytest.approx(
        4 * math.pi**2)
    assert volume(ConformalMetric.flat(ModelManifold.annulus(1, 2))).value == pytest.approx(
        3 * math.pi)


def test_torus_bubble_volume_excess():
    v = volume(torus_bubble(2, 128)).value
    target = 4 * math.pi**2 + math.pi
    assert abs(v - target) <= 0.05 * target


@given(c=st.sampled_from([0.25, 1.0, 4.0]), n=st.sampled_from([2, 3]))
def test_volume_scaling_law(c, n):
    g = disk_blowup(n, 0.2, 16)
    base = volume(g).value
    assert volume(g.rescaled(c)).value == pytest.approx(c ** (n / 2) * base, rel=1e-9)
    a = boundary_area(g).value
    assert boundary_area(g.rescaled(c)).value == pytest.approx(c ** ((n - 1) / 2) * a, rel=1e-9)


def test_volume_converges_with_level():
    g = cinched_sphere(2, 0.1, 64)
    vals = [volume(g, lev).value for lev in (3, 5, 7)]
    assert abs(vals[2] - vals[1]) <= abs(vals[1] - vals[0]) + 1e-12


def test_restricted_volume_complements():
    g = disk_blowup(2, 0.25, 16)
    total = volume(g).value

    def collar(P):
        return np.linalg.norm(P, axis=-1) > 1 - 2 / 16

    inner = restricted_volume(g, lambda P: ~collar(P), extra=(2 / 16,)).value
    outer = restricted_volume(g, collar, extra=(2 / 16,)).value
    assert inner + outer == pytest.approx(total, rel=1e-12)
    assert inner == pytest.approx(math.pi * (1 - 2 / 16) ** 2, rel=1e-9)
