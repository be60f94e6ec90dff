import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vadblab.collar import (
    boundary_pairs,
    build_collar,
    build_convexifier,
    build_tau,
    chord_polyline,
    clamp_curve,
    collar_excess_study,
    convexify,
    sff_min_eigen,
)
from vadblab.errors import DomainError, NumericalRangeError, UsageError
from vadblab.meshgeo import build_mesh, distances_from
from vadblab.metric_core import ConformalMetric, ModelManifold, curve_length


@pytest.fixture(scope="module")
def annulus():
    return ModelManifold.annulus(1.0, 2.0)


@pytest.fixture(scope="module")
def disk_chart():
    return build_collar(ModelManifold.disk(2))


@pytest.fixture(scope="module")
def annulus_chart(annulus):
    return build_collar(annulus)


# -- chart ------------------------------------------------------------------

def test_disk_chart_metric(disk_chart):
    t = np.linspace(0.01, disk_chart.t0, 50)
    assert np.allclose(disk_chart.h_scale(t), (1 - t) ** 2)
    # |h(t) - h(0)| = |2t - t^2| |h(0)| is O(t) with constant below 2
    assert disk_chart.h_constant() <= 2.0
    assert disk_chart.pullback_error() < 1e-8


def test_annulus_inner_chart(annulus_chart):
    t = np.linspace(0.01, annulus_chart.t0, 50)
    assert np.allclose(annulus_chart.h_scale(t, component=0), (1 + t) ** 2)
    assert annulus_chart.t0 == pytest.approx(0.5)
    assert annulus_chart.pullback_error() < 1e-8


@pytest.mark.parametrize("t,inside", [(0.04, False), (0.05, False), (0.051, True), (0.2, True)])
def test_membership(disk_chart, t, inside):
    assert bool(disk_chart.in_collar(np.array([[0.95, 0.0]]), t)[0]) is inside


@given(th=st.floats(0, 2 * math.pi), t=st.floats(0, 0.49))
def test_forward_inverse(disk_chart, th, t):
    X = disk_chart.forward(th, t)
    u, tt, k = disk_chart.inverse(X)
    assert tt[0] == pytest.approx(t, abs=1e-12)
    assert np.allclose(u[0], [math.cos(th), math.sin(th)])


def test_chart_needs_boundary():
    with pytest.raises(UsageError):
        build_collar(ModelManifold.sphere(2))


# -- clamp ------------------------------------------------------------------

def test_clamp_leaves_interior_curve(disk_chart):
    c = chord_polyline((-0.5, 0.1), (0.4, -0.3), 50)
    assert np.array_equal(clamp_curve(disk_chart, c, 0.1), c)


def test_clamp_pushes_boundary_arcs(disk_chart):
    t = 0.1
    c = chord_polyline((math.cos(0.3), math.sin(0.3)), (math.cos(2.0), math.sin(2.0)), 400)
    out = clamp_curve(disk_chart, c, t)
    r_in, r_out = np.linalg.norm(c, axis=1), np.linalg.norm(out, axis=1)
    moved = r_in > 1 - t
    assert moved.any()
    assert np.allclose(r_out[moved], 1 - t)
    assert np.array_equal(out[~moved], c[~moved])
    assert np.all(r_out <= 1 - t + 1e-12)


def test_clamp_rejects_wide_level(disk_chart):
    with pytest.raises(DomainError):
        clamp_curve(disk_chart, [(0.0, 0.0), (0.5, 0.0)], disk_chart.t0)


def test_collar_excess_grows_with_t(disk_chart):
    disk = ModelManifold.disk(2)
    mesh = build_mesh(disk, 0.05, 3.0)
    pairs = boundary_pairs(disk, 8, seed=3)
    study = collar_excess_study(disk_chart, mesh, pairs, [0.02, 0.06, 0.1])
    means = study.excess.mean(axis=0)
    assert np.all(np.diff(means) > 0)
    assert study.slope > 0


# -- tau --------------------------------------------------------------------

def test_tau_flat_boundary():
    tau = build_tau(0.2, 0.0)
    t = np.linspace(0, 1, 21)
    assert np.all(tau.value(t) == 1.0) and np.all(tau.derivative(t) == 0.0)


def test_tau_slope_condition():
    tau = build_tau(0.2, 1.0)
    t0 = float(tau.value(0.0))
    step = 1e-7
    fd = (float(tau.value(step)) - t0) / step
    assert t0 > 1
    assert fd <= -4 * t0 + 1e-6
    assert float(tau.value(0.2)) == pytest.approx(1.0, abs=1e-9)
    assert float(tau.derivative(0.2)) == pytest.approx(0.0, abs=1e-9)
    report = tau.verify()
    assert report["slope_ok"] and report["unit_beyond_t0"] == 0.0 and report["max_slope"] <= 0


@given(t0=st.floats(0.01, 1.0), a=st.floats(0.0, 5.0))
def test_tau_invariants(t0, a):
    tau = build_tau(t0, a)
    t = np.linspace(0, 2 * t0, 201)
    v, d = tau.value(t), tau.derivative(t)
    assert np.all(v >= 1.0) and np.all(d <= 1e-12)
    assert np.all(v[t >= t0] == 1.0)
    assert float(tau.derivative(0.0)) <= -4 * float(tau.value(0.0)) * a + 1e-9


# -- second fundamental form and convexification ----------------------------

def test_sff_disk(disk_chart):
    g0 = ConformalMetric.flat(disk_chart.base)
    assert sff_min_eigen(g0, disk_chart).value == pytest.approx(1.0, rel=0.02)


def test_sff_annulus_inner(annulus_chart, annulus):
    g0 = ConformalMetric.flat(annulus)
    assert sff_min_eigen(g0, annulus_chart, component=0).value == pytest.approx(-1.0, rel=0.02)


def test_sff_after_convexify(annulus_chart, annulus):
    g0 = ConformalMetric.flat(annulus)
    gt = convexify(g0, annulus_chart, 0.2)
    assert sff_min_eigen(gt, annulus_chart).value > 0


def test_sff_bad_step(disk_chart):
    g0 = ConformalMetric.flat(disk_chart.base)
    with pytest.raises(NumericalRangeError):
        sff_min_eigen(g0, disk_chart, step=disk_chart.t0)


def test_convexify_keeps_interior_lengths(annulus_chart, annulus, rng):
    g0 = ConformalMetric.flat(annulus)
    gt = convexify(g0, annulus_chart, 0.2)
    assert gt.convention == "phi"
    for _ in range(20):
        r = rng.uniform(1.25, 1.75, 2)
        th = rng.uniform(0, 2 * math.pi) + np.array([0.0, 0.5])
        arc = np.linspace(0, 1, 30)[:, None]
        P = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        c = (1 - arc) * P[0] + arc * P[1]
        c = c * (np.clip(np.linalg.norm(c, axis=1), 1.25, 1.75) / np.linalg.norm(c, axis=1))[:, None]
        assert abs(curve_length(gt, c).value - curve_length(g0, c).value) <= 1e-12


def test_convexify_factor_at_least_one(annulus_chart, annulus, rng):
    phi = build_convexifier(annulus_chart, 0.2).phi
    r = rng.uniform(1.0, 2.0, 500)
    th = rng.uniform(0, 2 * math.pi, 500)
    X = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    assert np.all(phi.factor(X) >= 1.0)


def test_convexified_distances_dominate(annulus_chart, annulus):
    t1 = 0.2
    g0 = ConformalMetric.flat(annulus)
    gt = convexify(g0, annulus_chart, t1)
    mesh = build_mesh(annulus, 0.05, 3.0)
    pool = np.flatnonzero(mesh.boundary_distance() >= t1)
    src = np.random.default_rng(0).choice(pool, 12, replace=False)
    gap = distances_from(mesh, gt, src)[:, pool] - distances_from(mesh, g0, src)[:, pool]
    assert gap.min() >= -1e-12
    # wrapping the inner circle at radius 1 + t1 instead of 1 costs at most pi t1
    assert gap.max() <= math.pi * t1 + 2 * mesh.h
