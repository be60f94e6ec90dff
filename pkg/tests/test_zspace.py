import math
import json
import warnings

import numpy as np
import pytest

from vadblab.errors import UsageError
from vadblab.families import disk_blowup
from vadblab.meshgeo import build_mesh, distances_from
from vadblab.metric_core import ConformalMetric, ModelManifold
from vadblab.vadb import select_good_set
from vadblab.zspace import build_zspace, save_zspace, z_distance, z_distances_from
from zoracle import glued_oracle


@pytest.fixture(scope="module")
def small():
    disk = ModelManifold.disk(2)
    mesh = build_mesh(disk, 0.15, 3.0)
    g0 = ConformalMetric.flat(disk)
    gj = disk_blowup(2, 0.25, 16)
    good = mesh.boundary_distance() >= 2 / 16
    gs = select_good_set(mesh, gj, g0, 0.05, sources=12)
    D = 2.4
    h_j = math.sqrt(2 * gs.delta_hat * D + gs.delta_hat**2) + mesh.h
    return mesh, g0, gj, good, h_j


def test_identical_copies_collapse(coarse_disk_mesh, flat_disk):
    z = build_zspace(coarse_disk_mesh, flat_disk, flat_disk, np.ones(coarse_disk_mesh.n_vertices,
                                                                     bool), 0.0)
    x = np.arange(0, coarse_disk_mesh.n_vertices, 17)
    for v in x:
        assert z_distance(z, int(z.phi0(v)), int(z.phij(v))).value == 0.0


def test_vertical_neck_bound(small):
    mesh, g0, gj, good, h_j = small
    z = build_zspace(mesh, g0, gj, good, h_j)
    ids = np.flatnonzero(good)
    D = z_distances_from(z, z.phi0(ids))
    assert np.all(D[np.arange(len(ids)), z.phij(ids)] <= h_j + 1e-9)


def test_route_down_across_up(small):
    mesh, g0, gj, good, h_j = small
    z = build_zspace(mesh, g0, gj, good, h_j)
    ids = np.flatnonzero(good)[::5]
    DZ = z_distances_from(z, z.phi0(ids))[:, z.phij(ids)]
    D0 = distances_from(mesh, g0, ids)[:, ids]
    assert np.all(DZ <= D0 + 2 * h_j + 1e-9)


def test_embedding_is_monotone(small):
    mesh, g0, gj, good, h_j = small
    z = build_zspace(mesh, g0, gj, good, h_j)
    src = np.arange(mesh.n_vertices)
    DZ = z_distances_from(z, z.phi0(src))[:, z.phi0(src)]
    assert np.all(DZ <= distances_from(mesh, g0, src) + 1e-9)
    # g_j >= g_0 means no shortcut through the neck
    assert np.allclose(DZ, distances_from(mesh, g0, src), atol=1e-9)


def test_matches_floyd_warshall(small):
    mesh, g0, gj, good, h_j = small
    z = build_zspace(mesh, g0, gj, good, h_j)
    D, phi0, phij, neck = glued_oracle(mesh, g0, gj, good, h_j, z.levels)
    src = np.arange(0, mesh.n_vertices, 3)
    N = mesh.n_vertices
    ZD = z_distances_from(z, z.phi0(src))
    assert np.allclose(ZD[:, z.phi0(np.arange(N))], D[phi0[src]][:, phi0], atol=1e-9)
    assert np.allclose(ZD[:, z.phij(np.arange(N))], D[phi0[src]][:, phij], atol=1e-9)
    for lev in range(z.levels):
        assert np.allclose(ZD[:, z.neck(np.arange(N), lev)], D[phi0[src]][:, neck(lev)],
                           atol=1e-9)
    ZJ = z_distances_from(z, z.phij(src))
    assert np.allclose(ZJ[:, z.phij(np.arange(N))], D[phij[src]][:, phij], atol=1e-9)


def test_closure_adds_one_ring(small):
    mesh, g0, gj, good, h_j = small
    z = build_zspace(mesh, g0, gj, good, h_j, closure=True)
    assert z.good.sum() > good.sum() and np.all(z.good[good])


def test_empty_good_set_disconnects(coarse_disk_mesh, flat_disk):
    N = coarse_disk_mesh.n_vertices
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        z = build_zspace(coarse_disk_mesh, flat_disk, flat_disk, np.zeros(N, bool), 0.3)
    assert caught and z.status == "empty_good_set"
    d = z_distance(z, int(z.phi0(0)), int(z.phij(0)))
    assert d.status == "disconnected" and math.isinf(d.value)


def test_usage_errors(small):
    mesh, g0, gj, good, h_j = small
    z = build_zspace(mesh, g0, gj, good, h_j)
    with pytest.raises(UsageError):
        z.neck(0, z.levels)
    with pytest.raises(UsageError):
        z_distance(z, 0, z.n_nodes)
    with pytest.raises(UsageError):
        build_zspace(mesh, g0, gj, good, -1.0)
    with pytest.raises(UsageError):
        build_zspace(mesh, g0, gj, [10**7], 0.1)


def test_export(tmp_path, small):
    mesh, g0, gj, good, h_j = small
    z = build_zspace(mesh, g0, gj, good, h_j)
    doc = json.loads(save_zspace(z, tmp_path / "z.json").read_text())
    assert len(doc["vertices"]) == z.n_nodes
    assert len(doc["columns"]["weight"]) == len(doc["edges"])
    assert set(doc["columns"]["block"]) == {0, 1, 2}
