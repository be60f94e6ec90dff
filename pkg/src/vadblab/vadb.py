"""Hypothesis checks, distance distortion, good sets and the flat-distance bound.

The runner ties everything together for one family over a list of j:
hypotheses (diameter, volume, boundary area, lower bound ``g_j >= (1-C_j)
g_0``), distortion of mesh distances, a certified good set W_j and the
closed-form bound ``2 V_j + h_j V + h_j A``.  A decreasing bound is
evidence for intrinsic flat convergence, not a proof of it.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputError, UsageError, VadbError
from .families import FamilySpec
from .measures import boundary_area, restricted_volume, volume, volume_nodes
from .meshgeo import MeshGraph, build_mesh, diameter_estimate, distances_from
from .metric_core import ConformalMetric, comparison_check, comparison_samples

CSV_COLUMNS = ("family", "n", "params", "j", "vol", "vol_err", "area", "diam_lo", "diam_hi",
               "C_j", "sup_excess", "frac_excess", "delta_hat", "V_j_hat", "h_j",
               "flat_bound", "status")

CSV_HELP = {
    "family": "family name",
    "n": "manifold dimension",
    "params": "family parameters (alpha or h0)",
    "j": "sequence index",
    "vol": "Vol(M, g_j) by quadrature",
    "vol_err": "quadrature error estimate of vol",
    "area": "Area(boundary, g_j); 0 for closed manifolds",
    "diam_lo": "landmark lower bound on the g_j diameter",
    "diam_hi": "diam_lo plus the 2 h kappa correction",
    "C_j": "measured lower-bound constant, g_j >= (1 - C_j) g_0",
    "sup_excess": "max sampled d_j - d_0 over mesh pairs",
    "frac_excess": "fraction of sampled pairs with d_j - d_0 > eps",
    "delta_hat": "certified half-excess on the selected good set",
    "V_j_hat": "Vol(M minus good set) under g_j",
    "h_j": "neck height sqrt(2 delta D + delta^2)",
    "flat_bound": "2 V_j + h_j V + h_j A (nan when not claimed)",
    "status": "ok, or ';'-joined failure flags",
}

HYPOTHESES = ("diameter", "volume", "area", "below")


@dataclass(frozen=True)
class RunConfig:
    """Numerical settings shared by every row of a run."""

    h: float = 0.02
    kappa: float = 4.0
    seed: int = 0
    level: int = 6
    landmarks: int = 32
    pairs: int = 4000
    sources: int = 24
    epsilon: float = 0.05
    t_ladder: tuple = (0.05, 0.1, 0.2)
    delta: float = 0.05
    diameter_bound: float | None = None
    area_bound: float | None = None
    volume_tol: float = 0.05
    below_tol: float = 0.05
    comparison_samples: int = 4000
    closure: bool = False

    def __post_init__(self):
        object.__setattr__(self, "t_ladder", tuple(float(t) for t in self.t_ladder))
        if not self.h > 0 or self.kappa < 2:
            raise UsageError("need h > 0 and kappa >= 2")
        if self.level < 1 or self.landmarks < 2 or self.sources < 2 or self.pairs < 1:
            raise UsageError("level >= 1, landmarks >= 2, sources >= 2, pairs >= 1 required")
        if self.epsilon < 0 or self.delta < 0 or any(t <= 0 for t in self.t_ladder):
            raise UsageError("epsilon, delta must be >= 0 and t-ladder entries > 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["t_ladder"] = list(self.t_ladder)
        return d


@lru_cache(maxsize=4)
def cached_mesh(manifold, h, kappa, seed) -> MeshGraph:
    return build_mesh(manifold, h, kappa, seed)


def mesh_for(family: FamilySpec, config: RunConfig) -> MeshGraph:
    return cached_mesh(family.base(), config.h, config.kappa, config.seed)


# ---------------------------------------------------------------------------
# hypotheses


@dataclass(frozen=True)
class HypothesisVerdict:
    diam_lower: float
    diam_upper: float
    diam_bound: float | None
    diam_pass: bool
    volume: float
    volume_err: float
    volume_target: float
    volume_gap: float
    volume_pass: bool
    area: float
    area_err: float
    area_bound: float | None
    area_pass: bool
    below_constant: float
    below_pass: bool
    below_note: str

    @property
    def volume_rel_gap(self) -> float:
        return self.volume_gap / self.volume_target

    def failures(self) -> list[str]:
        flags = (self.diam_pass, self.volume_pass, self.area_pass, self.below_pass)
        return [name for name, ok in zip(HYPOTHESES, flags) if not ok]

    def lines(self) -> list[str]:
        def tag(ok):
            return "PASS" if ok else "FAIL"
        D = "unset" if self.diam_bound is None else f"{self.diam_bound:g}"
        A = "unset" if self.area_bound is None else f"{self.area_bound:g}"
        return [
            f"[1 diameter] {tag(self.diam_pass)}  diam in [{self.diam_lower:.4f}, "
            f"{self.diam_upper:.4f}], D={D}",
            f"[2 volume]   {tag(self.volume_pass)}  vol={self.volume:.6g} target="
            f"{self.volume_target:.6g} gap={self.volume_gap:.4g} ({100 * self.volume_rel_gap:.2f}%)",
            f"[3 area]     {tag(self.area_pass)}  area={self.area:.6g}, A={A}",
            f"[4 below]    {tag(self.below_pass)}  C_j={self.below_constant:.6g}; {self.below_note}",
        ]

    def to_dict(self) -> dict:
        return {**asdict(self), "failures": self.failures()}


def below_constant(gj: ConformalMetric, g0: ConformalMetric, count: int = 4000,
                   seed: int = 0) -> float:
    """``C_j = max(0, 1 - min g_j/g_0)`` on a seeded sample plus probe points."""
    X = comparison_samples(gj.base, [gj, g0], count, seed)
    res = comparison_check(gj, g0, 1.0, X)
    C = max(0.0, 1.0 - res.min_ratio)
    # the sweep ends at lambda = 1 - C, which must hold on the same samples
    assert comparison_check(gj, g0, 1.0 - C - 1e-12, X).holds
    return C


def hypothesis_report(family: FamilySpec, config: RunConfig = RunConfig(),
                      mesh: MeshGraph | None = None) -> HypothesisVerdict:
    """Evaluate the four hypotheses for one member of a family."""
    gj, g0 = family.metric(), family.g0()
    mesh = mesh_for(family, config) if mesh is None else mesh
    dm = diameter_estimate(mesh, gj, config.landmarks, config.seed)
    vol = volume(gj, config.level)
    target = volume(g0, config.level).value
    gap = vol.value - target
    if gj.base.has_boundary:
        ar = boundary_area(gj, config.level)
        area, area_err = ar.value, ar.error_estimate
    else:
        area, area_err = 0.0, 0.0
    C = below_constant(gj, g0, config.comparison_samples, config.seed)
    D, A = config.diameter_bound, config.area_bound
    return HypothesisVerdict(
        diam_lower=dm.lower, diam_upper=dm.upper, diam_bound=D,
        diam_pass=bool(D is None or dm.lower <= D),
        volume=vol.value, volume_err=vol.error_estimate, volume_target=target,
        volume_gap=gap, volume_pass=bool(abs(gap) <= config.volume_tol * target),
        area=area, area_err=area_err, area_bound=A,
        area_pass=bool(A is None or area <= A),
        below_constant=C, below_pass=bool(C <= config.below_tol),
        below_note="C_j must decrease to 0 along the sequence; see the run trend",
    )


# ---------------------------------------------------------------------------
# distance distortion


def _source_rows(mesh, gj, g0, sources):
    return distances_from(mesh, gj, sources), distances_from(mesh, g0, sources)


def sample_sources(n_vertices: int, count: int, seed: int, pool=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pool = np.arange(n_vertices) if pool is None else np.asarray(pool)
    count = min(count, len(pool))
    return np.sort(rng.choice(pool, size=count, replace=False))


@dataclass(frozen=True)
class DistortionStats:
    pairs: int
    sup_excess: float
    mean_excess: float
    sup_abs: float
    frac_excess: float
    epsilon: float
    restricted: dict = field(default_factory=dict)  # t -> stats on M_t^c x M_t^c

    def to_dict(self) -> dict:
        return asdict(self)


def _excess_summary(E: np.ndarray, eps: float) -> dict:
    if E.size == 0:
        return {"pairs": 0, "sup_excess": 0.0, "mean_excess": 0.0, "sup_abs": 0.0,
                "frac_excess": 0.0}
    return {"pairs": int(E.size), "sup_excess": float(E.max()),
            "mean_excess": float(E.mean()), "sup_abs": float(np.abs(E).max()),
            "frac_excess": float(np.mean(E > eps))}


def distance_distortion_stats(mesh: MeshGraph, gj: ConformalMetric, g0: ConformalMetric,
                              pairs: int = 4000, epsilon: float = 0.05,
                              t_ladder=(0.05, 0.1, 0.2), seed: int = 0,
                              sources: int = 24, rows=None) -> DistortionStats:
    """Statistics of ``d_j - d_0`` over a seeded sample of vertex pairs.

    Pairs are ``pairs / sources`` random targets for each of ``sources``
    seeded source vertices.  Precomputed ``rows = (src, Dj, D0)`` may be
    passed to reuse shortest-path runs.
    """
    N = mesh.n_vertices
    if rows is None:
        src = sample_sources(N, sources, seed)
        Dj, D0 = _source_rows(mesh, gj, g0, src)
    else:
        src, Dj, D0 = rows
    rng = np.random.default_rng(seed + 1)
    per = max(1, int(math.ceil(pairs / len(src))))
    tgt = rng.integers(0, N, size=(len(src), per))
    r = np.repeat(np.arange(len(src)), per)
    s_v, t_v = src[r], tgt.ravel()
    keep = s_v != t_v
    r, s_v, t_v = r[keep], s_v[keep], t_v[keep]
    E = Dj[r, t_v] - D0[r, t_v]
    restricted = {}
    depth = mesh.boundary_distance() if mesh.manifold.has_boundary else np.full(N, np.inf)
    for t in t_ladder:
        sel = (depth[s_v] >= t) & (depth[t_v] >= t)
        restricted[f"{t:g}"] = _excess_summary(E[sel], epsilon)
    return DistortionStats(epsilon=float(epsilon), restricted=restricted,
                           **_excess_summary(E, epsilon))


# ---------------------------------------------------------------------------
# good sets


@dataclass(frozen=True)
class Rung:
    """``W = {x : term radius farther than width from the varying region}``.

    ``width = None`` is the full manifold.
    """

    width: float | None
    intervals: tuple  # per term: tuple of (lo, hi) radius intervals where it varies

    def bad(self, metric: ConformalMetric, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[:-1], dtype=bool)
        if self.width is None:
            return out
        for term, ivs in zip(metric.terms, self.intervals):
            r = term.radius.evaluate(metric.base, X)
            for lo, hi in ivs:
                out |= (r >= lo - self.width) & (r <= hi + self.width)
        return out

    def breaks(self) -> tuple:
        if self.width is None:
            return ()
        out = []
        for ivs in self.intervals:
            for lo, hi in ivs:
                out.extend(v for v in (lo - self.width, hi + self.width) if v > 0)
        return tuple(out)

    def reach(self) -> float:
        return max(self.breaks(), default=0.0)

    def describe(self) -> str:
        return "all" if self.width is None else f"exclude varying region widened by {self.width:.4g}"


def varying_intervals(metric: ConformalMetric) -> tuple | None:
    """Radius intervals where each term differs from 1; None if nowhere flat."""
    if metric.scale != 1.0:
        return None
    out = []
    for term in metric.terms:
        prof = term.profile
        bp = prof.breakpoints
        ivs = []
        if abs(float(prof.value(bp[0])) - 1.0) > 1e-12:
            ivs.append((-math.inf, bp[0]))
        for k, seg in enumerate(prof.segments):
            if not (seg.is_constant and seg.params[0] == 1.0):
                ivs.append((bp[k], bp[k + 1]))
        if abs(float(prof.value(bp[-1])) - 1.0) > 1e-12:
            return None
        merged = []
        for lo, hi in ivs:
            if merged and lo <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(hi, merged[-1][1]))
            else:
                merged.append((lo, hi))
        out.append(tuple(merged))
    return tuple(out)


def candidate_ladder(metric: ConformalMetric) -> list[Rung]:
    """Nested rungs from the full manifold down to wide exclusions."""
    ivs = varying_intervals(metric)
    rungs = [Rung(None, ())]
    if ivs is None or not metric.terms:
        return rungs
    s = metric.feature_scale
    for w in (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0):
        rungs.append(Rung(w * s, ivs))
    return rungs


@dataclass
class GoodSet:
    mask: np.ndarray
    descriptor: str
    delta_hat: float
    V_hat: float
    status: str = "ok"
    certified: bool | None = None
    certificate_excess: float | None = None
    rung: Rung | None = None

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def to_dict(self) -> dict:
        return {"size": self.size, "descriptor": self.descriptor, "delta_hat": self.delta_hat,
                "V_hat": self.V_hat, "status": self.status, "certified": self.certified,
                "certificate_excess": self.certificate_excess}


def _half_excess(rows, mask) -> float:
    src, Dj, D0 = rows
    ins = mask[src]
    if not ins.any() or mask.sum() < 2:
        return 0.0
    E = Dj[ins][:, mask] - D0[ins][:, mask]
    return max(0.0, float(E.max())) / 2.0


def _voronoi_volume(mesh: MeshGraph, metric: ConformalMetric, mask, level: int) -> float:
    P, contrib = volume_nodes(metric, level)
    idx = mesh.nearest_vertex(P)
    return float(contrib[~mask[idx]].sum())


class GoodSetSearch:
    """Shared shortest-path samples for evaluating many candidate good sets."""

    def __init__(self, mesh: MeshGraph, gj: ConformalMetric, g0: ConformalMetric,
                 sources: int = 24, seed: int = 0, level: int = 6):
        self.mesh, self.gj, self.g0 = mesh, gj, g0
        self.level, self.seed, self.n_sources = level, seed, sources
        src = sample_sources(mesh.n_vertices, 2 * sources, seed)
        self.rows = (src, *_source_rows(mesh, gj, g0, src))

    def evaluate(self, rung: Rung) -> GoodSet:
        mask = ~rung.bad(self.gj, self.mesh.vertices)
        if rung.width is None:
            vhat = 0.0
        else:
            vhat = restricted_volume(self.gj, lambda P: rung.bad(self.gj, P), self.level,
                                     rung.breaks(), rung.reach()).value
        return GoodSet(mask, rung.describe(), _half_excess(self.rows, mask), vhat, rung=rung)

    def ladder(self) -> list[GoodSet]:
        return [self.evaluate(r) for r in candidate_ladder(self.gj)]

    def greedy(self, start: GoodSet, delta: float) -> GoodSet:
        """Drop the vertex in the most violating pairs until 2 delta_hat <= 2 delta."""
        src, Dj, D0 = self.rows
        mask = start.mask.copy()
        E = Dj - D0
        while mask.sum() > 1:
            ins = mask[src]
            sub = E[ins][:, mask]
            viol = sub > 2 * delta
            if not viol.any():
                break
            by_src, by_tgt = viol.sum(1), viol.sum(0)
            if by_src.max() >= by_tgt.max():
                v = src[ins][int(np.argmax(by_src))]
            else:
                v = np.flatnonzero(mask)[int(np.argmax(by_tgt))]
            mask[v] = False
        status = "ok" if mask.sum() > 1 else "degenerate_selection"
        vhat = _voronoi_volume(self.mesh, self.gj, mask, self.level)
        if start.rung is not None and start.rung.width is not None:
            vhat = max(vhat, start.V_hat)
        return GoodSet(mask, f"greedy from [{start.descriptor}]", _half_excess(self.rows, mask),
                       vhat, status, rung=start.rung)

    def certify(self, gs: GoodSet, tol: float | None = None) -> GoodSet:
        """Re-check the excess on fresh sources drawn from the good set."""
        tol = self.mesh.h if tol is None else tol
        pool = np.flatnonzero(gs.mask)
        if len(pool) < 2:
            gs.certified, gs.certificate_excess = False, math.nan
            return gs
        src = sample_sources(self.mesh.n_vertices, self.n_sources, self.seed + 7919, pool)
        Dj, D0 = _source_rows(self.mesh, self.gj, self.g0, src)
        E = Dj[:, gs.mask] - D0[:, gs.mask]
        gs.certificate_excess = float(E.max())
        gs.certified = bool(gs.certificate_excess <= 2 * gs.delta_hat + tol)
        return gs


def select_good_set(mesh: MeshGraph, gj: ConformalMetric, g0: ConformalMetric, delta: float,
                    sources: int = 24, seed: int = 0, level: int = 6) -> GoodSet:
    """Largest ladder rung with ``delta_hat <= delta``, else a greedy shrink."""
    if delta < 0:
        raise InputError("delta must be nonnegative")
    search = GoodSetSearch(mesh, gj, g0, sources, seed, level)
    ladder = search.ladder()
    for gs in ladder:
        if gs.delta_hat <= delta:
            return search.certify(gs)
    best = min(ladder, key=lambda g: g.delta_hat)
    return search.certify(search.greedy(best, delta))


# ---------------------------------------------------------------------------
# flat bound


@dataclass(frozen=True)
class FlatDistanceBound:
    D: float
    V: float
    A: float
    V_j: float
    delta_j: float
    h_j: float
    volume_term: float
    V_term: float
    A_term: float
    value: float

    def to_dict(self) -> dict:
        return asdict(self)


def flat_bound(D: float, V: float, A: float, V_j: float, delta_j: float) -> FlatDistanceBound:
    """``h_j = sqrt(2 delta_j D + delta_j^2)`` and ``2 V_j + h_j V + h_j A``."""
    vals = {"D": D, "V": V, "A": A, "V_j": V_j, "delta_j": delta_j}
    for k, v in vals.items():
        if not (isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v) and v >= 0):
            raise InputError(f"{k}={v!r} must be a finite nonnegative number")
    D, V, A, V_j, delta_j = (float(v) for v in vals.values())
    h = math.sqrt(2.0 * delta_j * D + delta_j * delta_j)
    a, b, c = 2.0 * V_j, h * V, h * A
    return FlatDistanceBound(D, V, A, V_j, delta_j, h, a, b, c, a + b + c)


# ---------------------------------------------------------------------------
# runner


@dataclass
class ReportRow:
    family: FamilySpec
    verdict: HypothesisVerdict | None = None
    stats: DistortionStats | None = None
    good_set: GoodSet | None = None
    bound: FlatDistanceBound | None = None
    rescaled: dict | None = None
    status: str = "ok"
    seconds: float = 0.0

    @property
    def j(self) -> int:
        return self.family.j

    @property
    def is_error(self) -> bool:
        return self.status.startswith("error")

    def csv_values(self) -> dict:
        v, s, g, b = self.verdict, self.stats, self.good_set, self.bound
        nan = math.nan
        return {
            "family": self.family.family, "n": self.family.n,
            "params": self.family.params_label(), "j": self.j,
            "vol": v.volume if v else nan, "vol_err": v.volume_err if v else nan,
            "area": v.area if v else nan,
            "diam_lo": v.diam_lower if v else nan, "diam_hi": v.diam_upper if v else nan,
            "C_j": v.below_constant if v else nan,
            "sup_excess": s.sup_excess if s else nan, "frac_excess": s.frac_excess if s else nan,
            "delta_hat": g.delta_hat if g else nan, "V_j_hat": g.V_hat if g else nan,
            "h_j": b.h_j if b else nan, "flat_bound": b.value if b else nan,
            "status": self.status,
        }

    def to_dict(self) -> dict:
        return {
            "family": self.family.to_dict(), "j": self.j, "status": self.status,
            "verdict": self.verdict.to_dict() if self.verdict else None,
            "distortion": self.stats.to_dict() if self.stats else None,
            "good_set": self.good_set.to_dict() if self.good_set else None,
            "flat_bound": self.bound.to_dict() if self.bound else None,
            "rescaled": self.rescaled,
        }


@dataclass
class ConvergenceReport:
    family: FamilySpec
    config: RunConfig
    rows: list
    trend: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            vals = row.csv_values()
            w.writerow([_fmt(vals[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "family": self.family.to_dict(),
            "config": self.config.to_dict(),
            "rows": [r.to_dict() for r in self.rows],
            "trend": self.trend,
            "note": "the flat bound trending to 0 is evidence for volume preserving "
                    "intrinsic flat convergence, not a computation of that distance",
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.10g}"
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _best_bound(search: GoodSetSearch, D, V, A) -> tuple[GoodSet, FlatDistanceBound]:
    best = None
    for gs in search.ladder():
        b = flat_bound(D, V, A, gs.V_hat, gs.delta_hat)
        if best is None or b.value < best[1].value:
            best = (gs, b)
    gs, b = best
    search.certify(gs)
    return gs, b


def run_row(family: FamilySpec, config: RunConfig, mesh: MeshGraph | None = None) -> ReportRow:
    """One row of the report; stage errors land in the status."""
    t0 = time.perf_counter()
    row = ReportRow(family)
    try:
        mesh = mesh_for(family, config) if mesh is None else mesh
        gj, g0 = family.metric(), family.g0()
        row.verdict = v = hypothesis_report(family, config, mesh)
        src = sample_sources(mesh.n_vertices, config.sources, config.seed)
        rows = (src, *_source_rows(mesh, gj, g0, src))
        row.stats = distance_distortion_stats(mesh, gj, g0, config.pairs, config.epsilon,
                                              config.t_ladder, config.seed, rows=rows)
        flags = [f"hyp_fail:{name}" for name in v.failures()]
        C = v.below_constant
        n = family.n
        if C > 0:
            g_used = gj.rescaled(1.0 / (1.0 - C)) if C < 1 else None
            if g_used is not None:
                st = distance_distortion_stats(mesh, g_used, g0, config.pairs, config.epsilon,
                                               config.t_ladder, config.seed, config.sources)
                row.rescaled = {"factor": 1.0 / (1.0 - C), "distortion": st.to_dict()}
        else:
            g_used = gj
        if C > config.below_tol or g_used is None:
            flags.append("no_bound")
        else:
            k = 1.0 / (1.0 - C)
            D = (config.diameter_bound or v.diam_upper) * math.sqrt(k)
            V = (v.volume + v.volume_err) * k ** (n / 2)
            A = (v.area + v.area_err) * k ** ((n - 1) / 2)
            search = GoodSetSearch(mesh, g_used, g0, config.sources, config.seed, config.level)
            row.good_set, row.bound = _best_bound(search, D, V, A)
            if row.good_set.certified is False:
                flags.append("uncertified_good_set")
            if row.good_set.status != "ok":
                flags.append(row.good_set.status)
        row.status = ";".join(flags) if flags else "ok"
    except VadbError as exc:
        row.status = f"error:{type(exc).__name__}:{exc}"
    except (ValueError, ArithmeticError, RuntimeError, MemoryError) as exc:
        row.status = f"error:{type(exc).__name__}:{exc}"
    row.seconds = time.perf_counter() - t0
    return row


def _strictly_decreasing(xs) -> bool:
    xs = [x for x in xs if x is not None and math.isfinite(x)]
    return len(xs) >= 2 and all(b < a for a, b in zip(xs, xs[1:]))


def trend_summary(rows, config: RunConfig) -> dict:
    bounds = [r.bound.value if r.bound else None for r in rows]
    gaps = [abs(r.verdict.volume_gap) if r.verdict else None for r in rows]
    Cs = [r.verdict.below_constant if r.verdict else None for r in rows]
    finite_C = [c for c in Cs if c is not None]
    return {
        "j": [r.j for r in rows],
        "flat_bound": bounds,
        "flat_bound_decreasing": _strictly_decreasing(bounds),
        "flat_bound_last": bounds[-1] if bounds else None,
        "volume_gap": gaps,
        "volume_gap_decreasing": _strictly_decreasing(gaps),
        "below_constant": Cs,
        "below_shrinking": bool(finite_C) and all(b <= a for a, b in zip(finite_C, finite_C[1:]))
        and finite_C[-1] <= config.below_tol,
        "errors": sum(r.is_error for r in rows),
    }


def run_experiment(family: FamilySpec, j_list, config: RunConfig = RunConfig(),
                   progress=None) -> ConvergenceReport:
    """Rows for every j in ``j_list`` (increasing) on one shared mesh."""
    j_list = [int(j) for j in j_list]
    if not j_list or any(b <= a for a, b in zip(j_list, j_list[1:])):
        raise UsageError("j-list must be nonempty and strictly increasing")
    rows = []
    mesh = None
    try:
        mesh = mesh_for(family, config)
    except VadbError:
        pass  # each row re-raises into its own status
    for j in j_list:
        try:
            fam = family.with_j(j)
        except VadbError as exc:
            r = ReportRow(family)
            r.status = f"error:{type(exc).__name__}:{exc}"
            rows.append(r)
            continue
        row = run_row(fam, config, mesh)
        rows.append(row)
        if progress is not None:
            progress(row)
    return ConvergenceReport(family, config, rows, trend_summary(rows, config))
