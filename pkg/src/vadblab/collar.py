"""Boundary collars: normal-exponential charts, clamped curves, convexification.

Sign convention for the second fundamental form: with ``nu`` the inward
unit normal, ``2A = -L_nu g`` on the induced boundary metric.  The unit
circle bounding the disk then has ``A = +1`` and the inner circle of an
annulus has ``A = -1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DomainError, NumericalRangeError, UsageError
from .metric_core import (
    ConformalMetric,
    FactorTerm,
    ModelManifold,
    RadialProfile,
    RadiusSpec,
    Segment,
    curve_length,
)

SLOPE_FACTOR = 5.0  # target tau'(0) = -SLOPE_FACTOR * tau(0) * |A|; 4 is the limit


# ---------------------------------------------------------------------------
# chart


def _unit_dirs(n: int, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if n == 2 and (u.ndim == 0 or (u.ndim == 1 and u.shape[-1] != 2)):
        th = np.atleast_1d(u)
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    u = np.atleast_2d(u)
    return u / np.linalg.norm(u, axis=-1, keepdims=True)


def _tangent_basis(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space of the unit sphere at u, (n-1, n)."""
    n = len(u)
    Q, _ = np.linalg.qr(np.column_stack([u, np.eye(n)]))
    return Q[:, 1:n].T


@dataclass(frozen=True)
class CollarChart:
    """Normal-exponential coordinates ``(boundary point, t)`` near the boundary.

    Boundary points are unit directions ``u`` (or angles when n = 2) on
    boundary component ``k``; ``forward(u, t, k) = (r_k + s_k t) u`` where
    ``s_k`` is the inward sign of the component.
    """

    base: ModelManifold
    t0: float

    def _component(self, k: int) -> tuple[float, int]:
        comps = self.base.boundary_components()
        if not 0 <= k < len(comps):
            raise UsageError(f"boundary component {k} does not exist")
        return comps[k]

    def forward(self, u, t, component: int = 0) -> np.ndarray:
        rb, sign = self._component(component)
        U = _unit_dirs(self.base.dim, u)
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t0 * (1 + 1e-12)):
            raise DomainError(f"normal coordinate outside [0, t0={self.t0:g}]")
        return (rb + sign * t)[..., None] * U if t.ndim else (rb + sign * float(t)) * U

    def inverse(self, X):
        """``(u, t, component)`` for points of M_{t0}."""
        X = self.base.check_points(X)
        r = np.linalg.norm(X, axis=-1)
        comps = self.base.boundary_components()
        gaps = np.stack([np.abs(r - rb) for rb, _ in comps], axis=-1)
        k = np.argmin(gaps, axis=-1)
        t = np.min(gaps, axis=-1)
        if np.any(t > self.t0 * (1 + 1e-12)) or np.any(r == 0):
            raise DomainError(f"point lies outside the collar of width {self.t0:g}")
        return X / r[..., None], t, k

    def in_collar(self, X, t: float) -> np.ndarray:
        """Membership in ``M_t = {x : d_0(x, dM) < t}``."""
        if t <= 0:
            raise UsageError("collar width t must be positive")
        return self.base.boundary_distance(self.base.as_points(X)) < t

    def h_scale(self, t, component: int = 0):
        """``h(t) = h_scale(t) * h(0)`` for the induced boundary metric."""
        rb, sign = self._component(component)
        return ((rb + sign * np.asarray(t, dtype=float)) / rb) ** 2

    def h_constant(self, samples: int = 64) -> float:
        """Measured ``C`` with ``|h(t) - h(0)| <= C t |h(0)|`` on (0, t0]."""
        t = np.linspace(self.t0 / samples, self.t0, samples)
        return max(float(np.max(np.abs(self.h_scale(t, k) - 1.0) / t))
                   for k in range(len(self.base.boundary_components())))

    def pullback_error(self, samples: int = 32, seed: int = 0, step: float = 1e-5) -> float:
        """Max deviation of the pulled-back g_0 from ``dt^2 + h(t)``.

        Central differences of the forward map give ``|d_t x|^2 = 1`` and
        ``<d_t x, d_a x> = 0``; the tangential block must equal
        ``h_scale(t)`` times the boundary metric.
        """
        rng = np.random.default_rng(seed)
        n = self.base.dim
        worst = 0.0
        for k in range(len(self.base.boundary_components())):
            rb, _ = self._component(k)
            for _ in range(samples):
                u = rng.normal(size=n)
                u /= np.linalg.norm(u)
                t = rng.uniform(step, self.t0 - step)
                dt = (self.forward(u, t + step, k) - self.forward(u, t - step, k))[0] / (2 * step)
                worst = max(worst, abs(dt @ dt - 1.0))
                for e in _tangent_basis(u):
                    up, um = u + step * e, u - step * e
                    # boundary coordinate is arclength on the radius-rb sphere
                    da = (self.forward(up, t, k) - self.forward(um, t, k))[0] / (2 * step * rb)
                    worst = max(worst, abs(dt @ da), abs(da @ da - self.h_scale(t, k)))
        return worst

    def to_dict(self) -> dict:
        return {"manifold": self.base.to_dict(), "t0": self.t0}


def build_collar(base: ModelManifold, metric: ConformalMetric | None = None,
                 samples: int = 256, seed: int = 0) -> CollarChart:
    """Widest verified collar: half the annulus width, at most 1/2 on a disk."""
    if not base.has_boundary:
        raise UsageError(f"the {base.kind} has empty boundary; no collar chart")
    if metric is not None and metric.base != base:
        raise UsageError("metric is based on a different manifold")
    if base.kind == "disk":
        t0 = min(0.5, base.params[0] / 2)
    else:
        t0 = (base.params[1] - base.params[0]) / 2
    rng = np.random.default_rng(seed)
    while t0 > 1e-6:
        chart = CollarChart(base, t0)
        if _injective_on_samples(chart, rng, samples):
            return chart
        t0 /= 2
    raise UsageError("no injective collar found")


def _injective_on_samples(chart: CollarChart, rng, samples) -> bool:
    n = chart.base.dim
    for k in range(len(chart.base.boundary_components())):
        U = rng.normal(size=(samples, n))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        T = rng.uniform(0, chart.t0 * (1 - 1e-9), samples)
        X = chart.forward(U, T, k)
        U2, T2, K2 = chart.inverse(X)
        if not (np.allclose(U2, U, atol=1e-9) and np.allclose(T2, T, atol=1e-9)
                and np.all(K2 == k)):
            return False
    return True


# ---------------------------------------------------------------------------
# clamped curves


def clamp_curve(chart: CollarChart, curve, t: float) -> np.ndarray:
    """Push every polyline vertex in M_t out to normal coordinate ``t``."""
    if not 0 < t < chart.t0:
        raise DomainError(f"clamp level t={t} must lie in (0, t0={chart.t0:g})")
    P = chart.base.check_points(curve).copy()
    inside = chart.in_collar(P, t)
    if np.any(inside):
        U, _, K = chart.inverse(P[inside])
        Q = np.empty_like(U)
        for k in np.unique(K):
            sel = K == k
            Q[sel] = chart.forward(U[sel], np.full(sel.sum(), t), int(k))
        P[inside] = Q
    return P


def chord_polyline(p, q, count: int = 512) -> np.ndarray:
    s = np.linspace(0.0, 1.0, count)[:, None]
    return (1 - s) * np.asarray(p, float) + s * np.asarray(q, float)


@dataclass(frozen=True)
class CollarExcessStudy:
    """Excess of clamped chords over mesh distances, one row per pair."""

    ts: np.ndarray
    excess: np.ndarray  # (pairs, len(ts))
    slope: float
    residuals: np.ndarray

    @property
    def min_excess(self) -> float:
        return float(self.excess.min())


def boundary_pairs(base: ModelManifold, count: int, seed: int = 0,
                   min_gap: float = 0.4) -> np.ndarray:
    """Seeded pairs of boundary points at least ``min_gap`` apart, shape (count, 2, n)."""
    rng = np.random.default_rng(seed)
    rb, _ = base.boundary_components()[-1]
    out = []
    while len(out) < count:
        U = rng.normal(size=(2, base.dim))
        U = rb * U / np.linalg.norm(U, axis=1, keepdims=True)
        if np.linalg.norm(U[0] - U[1]) >= min_gap:
            out.append(U)
    return np.asarray(out)


def collar_excess_study(chart: CollarChart, mesh, pairs: np.ndarray, ts) -> CollarExcessStudy:
    """``len(clamp(chord(p, q), t)) - d_mesh(p_t, q_t)`` for each pair and t.

    ``p_t, q_t`` are the clamped endpoints, so the comparison is between
    two curves with the same ends.  The slope is the least-squares fit
    ``excess ~ K t`` through the origin over all pairs.
    """
    from .meshgeo import point_distances

    g0 = ConformalMetric.flat(chart.base)
    ts = np.asarray(ts, dtype=float)
    E = np.empty((len(pairs), len(ts)))
    ends = []
    for i, (p, q) in enumerate(pairs):
        for k, t in enumerate(ts):
            c = clamp_curve(chart, chord_polyline(p, q), t)
            E[i, k] = curve_length(g0, c).value
            ends.append((c[0], c[-1]))
    X = np.concatenate([np.asarray(e) for e in ends])
    D = point_distances(mesh, g0, X)
    idx = np.arange(0, len(X), 2)
    E -= D[idx, idx + 1].reshape(E.shape)
    slope = float(np.sum(E * ts) / (len(pairs) * np.sum(ts * ts)))
    return CollarExcessStudy(ts, E, slope, E - slope * ts)


# ---------------------------------------------------------------------------
# tau and convexification


@dataclass(frozen=True)
class TauProfile:
    """Radial factor ``tau`` with tau = 1 on [t0, inf), tau' <= 0 and
    ``tau'(0) = -slope_factor * tau(0) * a_norm``."""

    profile: RadialProfile
    a_norm: float
    t0: float
    slope_factor: float = SLOPE_FACTOR

    def value(self, t):
        return self.profile.value(t)

    def derivative(self, t):
        return self.profile.derivative(t)

    def verify(self, step: float = 1e-7) -> dict:
        """Re-check the three conditions numerically (finite differences)."""
        t = np.linspace(0.0, 2 * self.t0, 2001)
        fd0 = (self.value(step) - self.value(0.0)) / step
        tau0 = float(self.value(0.0))
        return {
            "unit_beyond_t0": float(np.max(np.abs(self.value(t[t >= self.t0]) - 1.0))),
            "max_slope": float(np.max(self.derivative(t))),
            "slope_at_0": float(fd0),
            "slope_bound": -4.0 * tau0 * self.a_norm,
            "slope_ok": bool(fd0 <= -4.0 * tau0 * self.a_norm + 1e-6 * max(1.0, tau0)),
        }

    def to_dict(self) -> dict:
        return {"t0": self.t0, "a_norm": self.a_norm, "slope_factor": self.slope_factor,
                "tau0": float(self.value(0.0)), "profile": self.profile.to_dict()}


def build_tau(t0: float, a_norm: float, slope_factor: float = SLOPE_FACTOR) -> TauProfile:
    """Log-plateau profile ``tau = exp(lam t0 W(t / t0))`` with ``lam = slope_factor * a_norm``.

    ``log tau`` has slope exactly ``-lam`` on [0, t0/2] and flattens
    smoothly to 0 at t0, so the slope condition holds in closed form.
    """
    if not t0 > 0:
        raise UsageError("collar width t0 must be positive")
    if a_norm < 0:
        raise UsageError("second fundamental form norm must be nonnegative")
    lam = slope_factor * a_norm
    seg = Segment("log_plateau", (lam,)) if lam > 0 else Segment("const", (1.0,))
    prof = RadialProfile((0.0, t0), (seg,), floor=1.0, name=f"tau(t0={t0:g},|A|={a_norm:g})")
    tau = TauProfile(prof, float(a_norm), float(t0), slope_factor)
    assert float(tau.derivative(0.0)) <= -4.0 * float(tau.value(0.0)) * a_norm + 1e-12
    return tau


@dataclass(frozen=True)
class SffResult:
    value: float
    first_order: float  # estimate before Richardson extrapolation
    step: float
    per_sample: np.ndarray = field(compare=False, repr=False)


def _boundary_samples(base: ModelManifold, count: int, component: int):
    n = base.dim
    if n == 2:
        th = 2 * math.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    rng = np.random.default_rng(component)
    U = rng.normal(size=(count, n))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def _sff_eigs(metric: ConformalMetric, chart: CollarChart, u: np.ndarray, k: int, step: float):
    """Eigenvalues of A against the induced metric at boundary direction u."""
    rb, _ = chart._component(k)
    basis = _tangent_basis(u)
    eps = 1e-6

    def gram(t):
        x = chart.forward(u, t, k)[0]
        J = np.stack([(chart.forward(u + eps * e, t, k)[0] - chart.forward(u - eps * e, t, k)[0])
                      / (2 * eps * rb) for e in basis])
        return float(metric.factor(x[None, :])[0]) * (J @ J.T)

    G0, G1, G2 = gram(0.0), gram(step), gram(2 * step)
    dG = (-3 * G0 + 4 * G1 - G2) / (2 * step)
    c0 = float(metric.factor(chart.forward(u, 0.0, k))[0])
    A = -0.5 * dG / math.sqrt(c0)
    return linalg.eigh(0.5 * (A + A.T), G0, eigvals_only=True)


def sff_min_eigen(metric: ConformalMetric, chart: CollarChart, samples=None,
                  step: float | None = None, component: int | None = None) -> SffResult:
    """Smallest principal curvature of the boundary under ``metric``.

    One-sided second-order differences of the induced metric in the
    normal coordinate at step ``k`` and ``k/2`` are combined by one
    Richardson level.  ``samples`` is a count or an array of unit
    directions; ``component`` restricts to one boundary sphere.
    """
    if metric.base != chart.base:
        raise UsageError("metric and chart live on different manifolds")
    step = chart.t0 * 1e-3 if step is None else step
    if not (1e-10 < step and 2 * step < chart.t0):
        raise NumericalRangeError(f"finite-difference step {step:g} leaves the collar chart")
    comps = range(len(chart.base.boundary_components())) if component is None else [component]
    vals, coarse = [], []
    for k in comps:
        if samples is None or np.isscalar(samples):
            U = _boundary_samples(chart.base, 32 if samples is None else int(samples), k)
        else:
            U = _unit_dirs(chart.base.dim, samples)
        for u in U:
            e1 = _sff_eigs(metric, chart, u, k, step)
            e2 = _sff_eigs(metric, chart, u, k, step / 2)
            # one-sided stencil error is O(k^2)
            vals.append(float(np.min((4 * e2 - e1) / 3)))
            coarse.append(float(np.min(e1)))
    vals = np.asarray(vals)
    i = int(np.argmin(vals))
    return SffResult(float(vals[i]), coarse[i], step, vals)


def measured_a_norm(chart: CollarChart, samples: int = 32) -> float:
    """Sup norm of the g_0 second fundamental form over boundary samples."""
    g0 = ConformalMetric.flat(chart.base)
    worst = 0.0
    for k in range(len(chart.base.boundary_components())):
        for u in _boundary_samples(chart.base, samples, k):
            eig = _sff_eigs(g0, chart, u, k, chart.t0 * 1e-3)
            worst = max(worst, float(np.max(np.abs(eig))))
    return worst


@dataclass(frozen=True)
class Convexifier:
    """``phi = tau o d_0(., dM)``; multiplies metrics once (``phi g``)."""

    chart: CollarChart
    t1: float
    tau: TauProfile

    @property
    def phi(self) -> ConformalMetric:
        term = FactorTerm(self.tau.profile, RadiusSpec("boundary"), exponent=1)
        return ConformalMetric(self.chart.base, (term,), 1.0, "phi", f"phi(t1={self.t1:g})")

    def apply(self, metric: ConformalMetric) -> ConformalMetric:
        return metric.times(self.phi, label=f"phi*{metric.label}")

    def to_dict(self) -> dict:
        return {"t1": self.t1, "a_norm": self.tau.a_norm, "tau": self.tau.to_dict()}


def build_convexifier(chart: CollarChart, t1: float) -> Convexifier:
    if not 0 < t1 <= chart.t0:
        raise DomainError(f"t1={t1} must lie in (0, t0={chart.t0:g}]")
    a = measured_a_norm(chart)
    # round away FD noise so a flat boundary gives exactly tau = 1
    a = 0.0 if a < 1e-9 else a
    return Convexifier(chart, float(t1), build_tau(t1, a))


def convexify(metric: ConformalMetric, chart: CollarChart, t1: float) -> ConformalMetric:
    """``phi * metric`` with phi built against the measured g_0 boundary curvature."""
    return build_convexifier(chart, t1).apply(metric)
