"""End-to-end acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line (shown in the terminal summary)
and then asserts the same condition, so a failing criterion fails its test.
"""

import math
import time

import numpy as np
import pytest

from vadblab.cli import path_clearance
from vadblab.collar import (
    boundary_pairs,
    build_collar,
    build_convexifier,
    collar_excess_study,
    sff_min_eigen,
)
from vadblab.families import (
    FamilySpec,
    check_construction_hyp,
    disk_blowup_volume_bounds,
)
from vadblab.measures import volume
from vadblab.meshgeo import build_mesh, distances_from, point_distance
from vadblab.metric_core import ConformalMetric, ModelManifold, curve_length
from vadblab.vadb import (
    RunConfig,
    cached_mesh,
    flat_bound,
    hypothesis_report,
    run_experiment,
    select_good_set,
)
from vadblab.zspace import build_zspace, z_distances_from
from zoracle import glued_oracle

pytestmark = pytest.mark.slow


def test_disk_blowup_sequence(criterion):
    fam = FamilySpec("disk_blowup", 2, 4, alpha=0.25)
    cfg = RunConfig(h=0.02, kappa=4.0, level=6)
    start = time.perf_counter()
    rep = run_experiment(fam, [4, 16, 64, 256], cfg)
    seconds = time.perf_counter() - start
    rows = {r.j: r for r in rep.rows}
    last = rows[256]
    vol_gap = abs(last.verdict.volume - math.pi) / math.pi
    sandwich = all(
        disk_blowup_volume_bounds(2, 0.25, j)[0] <= r.verdict.volume
        <= disk_blowup_volume_bounds(2, 0.25, j)[1] for j, r in rows.items())
    area_dev = max(abs(r.verdict.area / (2 * math.pi * j**0.25) - 1) for j, r in rows.items())
    diam = max(r.verdict.diam_lower for r in rows.values())
    frac = last.stats.frac_excess
    bounds = [rows[j].bound.value for j in (4, 16, 64, 256)]
    decreasing = all(b < a for a, b in zip(bounds, bounds[1:]))
    checks = {
        "vol@256 within 5%": vol_gap <= 0.05,
        "sandwich": sandwich,
        "area within 2%": area_dev <= 0.02,
        "diam <= 2.4": diam <= 2.4,
        "frac@256 < 1%": frac < 0.01,
        "bound decreasing": decreasing,
        "bound@256 < 0.5": bounds[-1] < 0.5,
        "runtime < 5 min": seconds < 300,
    }
    failed = [k for k, ok in checks.items() if not ok]
    detail = (f"vol gap {100 * vol_gap:.1f}%, area dev {100 * area_dev:.2g}%, diam {diam:.3f}, "
              f"frac {100 * frac:.2f}%, bounds {[round(b, 3) for b in bounds]}, "
              f"{seconds:.0f}s" + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert criterion(1, not failed, detail), detail


def test_cinched_sphere_shortcut(criterion):
    cfg = RunConfig(h=0.03, kappa=4.0, landmarks=8)
    fam = FamilySpec("cinched_sphere", 2, 64, h0=0.1)
    S = fam.base()
    mesh = cached_mesh(S, cfg.h, cfg.kappa, cfg.seed)
    p = np.array([math.cos(0.05), 0.0, -math.sin(0.05)])
    q = np.array([-math.cos(0.05), 0.0, -math.sin(0.05)])
    d_mesh = point_distance(mesh, fam.metric(), p, q)
    d_round = math.acos(float(np.clip(p @ q, -1, 1)))
    vol = volume(fam.metric()).value
    verdict = hypothesis_report(fam, cfg, mesh)
    C16 = hypothesis_report(fam.with_j(16), cfg, mesh).below_constant
    ok = (abs(vol - 4 * math.pi) <= 0.03 * 4 * math.pi and d_mesh < 1.0 and d_round > 3.0
          and abs(verdict.below_constant - 0.99) < 1e-9 and "below" in verdict.failures()
          and abs(C16 - 0.99) < 1e-9)
    detail = (f"vol {vol:.4f} ({100 * (vol / (4 * math.pi) - 1):+.2f}%), mesh d {d_mesh:.3f}, "
              f"round d {d_round:.3f}, C_j {verdict.below_constant:.4f} at j=64 and "
              f"{C16:.4f} at j=16, flagged {verdict.failures()}")
    assert criterion(2, ok, detail), detail


def test_torus_bubble_volume_excess(criterion):
    cfg = RunConfig(h=0.05, kappa=3.0, landmarks=8, level=6)
    js = (8, 32, 128)
    hyp = [check_construction_hyp(2, j) for j in js]
    fam = FamilySpec("torus_bubble", 2, 128)
    verdict = hypothesis_report(fam, cfg)
    target = 4 * math.pi**2 + math.pi
    vol_dev = abs(verdict.volume - target) / target
    ok = (vol_dev <= 0.05 and hyp[-1] <= 0.05 and hyp[0] > hyp[1] > hyp[2]
          and "volume" in verdict.failures() and abs(verdict.volume_gap - math.pi) <= 0.1 * math.pi)
    detail = (f"vol {verdict.volume:.4f} vs {target:.4f} ({100 * vol_dev:.2f}%), construction "
              f"integral {[round(h, 4) for h in hyp]}, gap {verdict.volume_gap:.3f} "
              f"(pi = {math.pi:.3f}), flagged {verdict.failures()}")
    assert criterion(3, ok, detail), detail


def test_convexification(criterion):
    A = ModelManifold.annulus(1.0, 2.0)
    t1 = 0.2
    chart = build_collar(A)
    cv = build_convexifier(chart, t1)
    g0 = ConformalMetric.flat(A)
    gt = cv.apply(g0)
    before = sff_min_eigen(g0, chart).value
    after = sff_min_eigen(gt, chart).value
    mesh = build_mesh(A, 0.04, 4.0)
    clear = path_clearance(mesh, cv, 100)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        r = rng.uniform(1 + t1, 2 - t1, 2)
        th = rng.uniform(0, 2 * math.pi, 2)
        s = np.linspace(0, 1, 40)[:, None]
        # polar interpolation keeps every vertex at radius in [1 + t1, 2 - t1]
        rad = (1 - s) * r[0] + s * r[1]
        ang = (1 - s) * th[0] + s * th[1]
        c = np.hstack([rad * np.cos(ang), rad * np.sin(ang)])
        worst = max(worst, abs(curve_length(gt, c).value - curve_length(g0, c).value))
    ok = (abs(before + 1) <= 0.05 and after > 0 and clear["paths"] == 100
          and clear["min_depth"] >= t1 / 2 and worst <= 1e-12)
    detail = (f"sff before {before:.4f}, after {after:.4f}; {clear['paths']} paths min depth "
              f"{clear['min_depth']:.3f} (>= {t1 / 2}); max length change {worst:.1e}")
    assert criterion(4, ok, detail), detail


def test_collar_lemma(criterion):
    disk = ModelManifold.disk(2)
    chart = build_collar(disk)
    pairs = boundary_pairs(disk, 50, seed=0)
    ts = np.array([0.02, 0.04, 0.06, 0.08, 0.1])
    studies = {}
    for h in (0.04, 0.02):
        mesh = cached_mesh(disk, h, 4.0, 0)
        studies[h] = collar_excess_study(chart, mesh, pairs, ts)
    k1, k2 = studies[0.04].slope, studies[0.02].slope
    drift = abs(k2 - k1) / abs(k1)
    # graph distances overestimate d_0 by up to one mesh spacing, so a
    # nonnegative pattern means excess >= -h per pair and positive per-t means
    pattern = all(
        s.excess.min() >= -h and np.all(s.excess.mean(axis=0) > 0)
        and np.all(np.diff(s.excess.mean(axis=0)) > 0) for h, s in studies.items())
    ok = k1 > 0 and k2 > 0 and drift <= 0.2 and pattern
    fine = studies[0.02]
    detail = (f"slope {k1:.4f} (h=0.04) -> {k2:.4f} (h=0.02), drift {100 * drift:.1f}%; "
              f"per-t mean excess {np.round(fine.excess.mean(axis=0), 4).tolist()}, "
              f"min pair excess {fine.min_excess:.4f}")
    assert criterion(5, ok, detail), detail


def _zspace_checks(mesh, g0, gj, mask, h_j):
    z = build_zspace(mesh, g0, gj, mask, h_j)
    N = mesh.n_vertices
    allv = np.arange(N)
    good = np.flatnonzero(mask)
    DZ0 = z_distances_from(z, z.phi0(allv))
    vertical = float(np.max(DZ0[good, z.phij(good)]))
    mono = float(np.max(DZ0[:, z.phi0(allv)] - distances_from(mesh, g0, allv)))
    D, phi0, phij, neck = glued_oracle(mesh, g0, gj, mask, h_j, z.levels)
    oracle_ids = np.concatenate([phi0, *[neck(k) for k in range(z.levels)], phij])
    z_ids = np.concatenate([z.phi0(allv), *[z.neck(allv, k) for k in range(z.levels)],
                            z.phij(allv)])
    ZD = z_distances_from(z, z_ids)[:, z_ids]
    OD = D[np.ix_(oracle_ids, oracle_ids)]
    fin = np.isfinite(OD)
    agree = float(np.max(np.abs(ZD[fin] - OD[fin])))
    same_inf = bool(np.array_equal(np.isinf(ZD), np.isinf(OD)))
    ok = vertical <= h_j + 1e-9 and mono <= 1e-9 and agree <= 1e-9 and same_inf
    return ok, z.levels, vertical, mono, agree


def test_zspace(criterion):
    disk = ModelManifold.disk(2)
    mesh = build_mesh(disk, 0.15, 3.0)
    fam = FamilySpec("disk_blowup", 2, 16, alpha=0.25)
    g0, gj = fam.g0(), fam.metric()
    gs = select_good_set(mesh, gj, g0, 0.05, sources=12)
    estimated = flat_bound(2.4, 0.0, 0.0, 0.0, gs.delta_hat).h_j
    # the estimate is ~0 here, so a positive neck is checked as well
    results, parts = [], []
    for h_j in (estimated, 3 * mesh.h):
        ok, levels, vertical, mono, agree = _zspace_checks(mesh, g0, gj, gs.mask, h_j)
        results.append(ok)
        parts.append(f"h_j {h_j:.3g} ({levels} levels): vertical {vertical:.3g}, "
                     f"monotonicity {mono:.1e}, oracle {agree:.1e}")
    detail = f"{mesh.n_vertices} vertices, |W_j| {gs.size}; " + "; ".join(parts)
    assert criterion(6, all(results), detail), detail


def test_flat_bound_formula(criterion):
    b = flat_bound(2.0, math.pi, 2 * math.pi, 0.01, 0.005)
    hand = 2 * 0.01 + math.sqrt(2 * 0.005 * 2 + 0.005**2) * (math.pi + 2 * math.pi)
    exact = abs(b.value - hand) <= 1e-9 and abs(b.value - 1.3537) < 5e-5
    zero = flat_bound(0, 0, 0, 0, 0).value == 0.0 and flat_bound(2, 1, 1, 0, 0).value == 0.0
    rng = np.random.default_rng(2024)
    violations = 0
    for _ in range(1000):
        x = rng.uniform(0, 10, 5)
        dx = rng.uniform(0, 1, 5) * (rng.random(5) < 0.5)
        if flat_bound(*(x + dx)).value < flat_bound(*x).value - 1e-12:
            violations += 1
    ok = exact and zero and violations == 0
    detail = (f"bound {b.value:.10f} vs hand {hand:.10f}; zero inputs -> 0: {zero}; "
              f"monotonicity violations {violations}/1000")
    assert criterion(7, ok, detail), detail


def test_infrastructure(criterion, tmp_path):
    fam = FamilySpec("disk_blowup", 2, 4, alpha=0.25)
    cfg = RunConfig(h=0.06, kappa=3.0, seed=3, landmarks=6, pairs=500, sources=8)
    cached_mesh.cache_clear()
    first = run_experiment(fam, [4, 16], cfg).to_csv().encode()
    cached_mesh.cache_clear()
    second = run_experiment(fam, [4, 16], cfg).to_csv().encode()
    identical = first == second

    rng = np.random.default_rng(11)
    meshes = {
        "disk": (cached_mesh(ModelManifold.disk(2), 0.05, 3.0, 0),
                 FamilySpec("disk_blowup", 2, 16, alpha=0.25).metric()),
        "sphere": (cached_mesh(ModelManifold.sphere(2), 0.08, 3.0, 0),
                   FamilySpec("cinched_sphere", 2, 16, h0=0.3).metric()),
        "torus": (cached_mesh(ModelManifold.torus(2), 0.15, 3.0, 0),
                  FamilySpec("torus_bubble", 2, 16).metric()),
        "annulus": (cached_mesh(ModelManifold.annulus(1.0, 2.0), 0.08, 3.0, 0),
                    ConformalMetric.flat(ModelManifold.annulus(1.0, 2.0))),
    }
    tri_worst = -np.inf
    for mesh, metric in meshes.values():
        src = rng.choice(mesh.n_vertices, size=40, replace=False)
        D = distances_from(mesh, metric, src)
        a = rng.integers(0, 40, 10_000)
        b = rng.integers(0, 40, 10_000)
        c = rng.integers(0, mesh.n_vertices, 10_000)
        # d(a, c) <= d(a, b) + d(b, c) with a, b sources
        viol = D[a, c] - (D[a, src[b]] + D[b, c])
        tri_worst = max(tri_worst, float(viol.max()))
    triangle = tri_worst <= 1e-9

    disk = ModelManifold.disk(2)
    g = FamilySpec("disk_blowup", 2, 16, alpha=0.25).metric()
    mesh = meshes["disk"][0]
    curve = np.array([[-0.9, 0.1], [0.0, 0.3], [0.95, -0.2]])
    scale_err = 0.0
    for c in (0.25, 1.0, 4.0):
        for base_metric in (ConformalMetric.flat(disk), g):
            gc = base_metric.rescaled(c)
            L = curve_length(gc, curve).value / curve_length(base_metric, curve).value
            V = volume(gc).value / volume(base_metric).value
            Dm = distances_from(mesh, gc, [0, 5]) / np.maximum(
                distances_from(mesh, base_metric, [0, 5]), 1e-300)
            Dm = Dm[np.isfinite(Dm) & (Dm > 0)]
            scale_err = max(scale_err, abs(L - math.sqrt(c)), abs(V - c),
                            float(np.max(np.abs(Dm - math.sqrt(c)))))
    scaling = scale_err <= 1e-9
    ok = identical and triangle and scaling
    detail = (f"byte-identical CSV: {identical}; worst triangle slack over 4x10^4 triples "
              f"{tri_worst:.1e}; worst scaling-law error {scale_err:.1e}")
    assert criterion(8, ok, detail), detail
