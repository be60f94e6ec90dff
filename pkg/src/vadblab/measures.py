"""Riemannian volume and boundary area of conformal metrics by quadrature.

Volumes are integrals of ``c^(n/2)`` against the g_0 volume, areas of
``c^((n-1)/2)`` against the g_0 boundary measure.  Quadrature is a product
of a radial rule and an angular rule about a center adapted to the
manifold.  Radial panels are split at every profile breakpoint and graded
dyadically toward both panel ends, so the width-1/j layers of the families
are resolved at any j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .metric_core import ConformalMetric, ModelManifold, unit_sphere_area

GAUSS_ORDER = 8


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    nodes_used: int


# ---------------------------------------------------------------------------
# rules


def graded_panel_nodes(a: float, b: float, level: int, order: int = GAUSS_ORDER):
    """Gauss-Legendre nodes on [a, b], sub-panels halving toward both ends.

    ``level`` dyadic shells are placed at each end, so the node density
    doubles in every shell approaching a breakpoint.
    """
    if b <= a:
        return np.empty(0), np.empty(0)
    x, w = np.polynomial.legendre.leggauss(order)
    cuts = {0.0, 1.0, 0.5}
    for k in range(1, level + 1):
        cuts.add(0.5 ** (k + 1))
        cuts.add(1.0 - 0.5 ** (k + 1))
    cuts = np.array(sorted(cuts)) * (b - a) + a
    lo, hi = cuts[:-1], cuts[1:]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def radial_rule(a: float, b: float, breaks, level: int):
    """Composite graded rule on [a, b] split at ``breaks``."""
    pts = sorted({a, b, *[float(t) for t in breaks if a < t < b]})
    xs, ws = [], []
    for lo, hi in zip(pts, pts[1:]):
        x, w = graded_panel_nodes(lo, hi, level)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def sphere_rule(n: int, level: int):
    """Nodes and weights on the unit sphere S^(n-1) in R^n (n = 2 or 3)."""
    m = 2 ** (min(level, 6) + 3)
    if n == 2:
        t = 2 * math.pi * np.arange(m) / m
        return np.stack([np.cos(t), np.sin(t)], axis=1), np.full(m, 2 * math.pi / m)
    if n == 3:
        m = 2 ** (min(level, 4) + 3)
        z, wz = np.polynomial.legendre.leggauss(m // 2)
        t = 2 * math.pi * np.arange(m) / m
        Z, T = np.meshgrid(z, t, indexing="ij")
        s = np.sqrt(1 - Z**2)
        X = np.stack([s * np.cos(T), s * np.sin(T), Z], axis=-1).reshape(-1, 3)
        W = (wz[:, None] * np.full(m, 2 * math.pi / m)[None, :]).ravel()
        return X, W
    raise UsageError("angular product quadrature is implemented for S^1 and S^2")


# ---------------------------------------------------------------------------
# radial structure of a metric


@dataclass(frozen=True)
class _Radial:
    """How a metric's factor depends on one radial variable."""

    lo: float
    hi: float
    breaks: tuple
    symmetric: bool  # factor depends on the radial variable only
    center: np.ndarray | None = None  # torus patch center


def _radial_structure(metric: ConformalMetric, extra=()) -> _Radial:
    """Radial variable of the quadrature; ``extra`` adds term-radius breaks."""
    base = metric.base
    extra = tuple(float(e) for e in extra)
    n = base.dim
    breaks: set[float] = set()
    symmetric = True
    if base.kind in ("disk", "annulus"):
        lo, hi = (0.0, base.params[0]) if base.kind == "disk" else base.params
        if base.kind == "annulus":
            breaks.add(0.5 * (lo + hi))
        for t in metric.terms:
            bp = np.asarray(t.profile.breakpoints + extra)
            if t.radius.kind == "boundary":
                for rb, sign in base.boundary_components():
                    breaks.update((rb + sign * bp).tolist())
            elif t.radius.kind == "point" and np.allclose(t.radius.center, 0.0):
                breaks.update(bp.tolist())
            else:
                symmetric = False
        return _Radial(lo, hi, tuple(sorted(breaks)), symmetric)
    if base.kind == "sphere":
        pole = base.north_pole
        for t in metric.terms:
            bp = np.asarray(t.profile.breakpoints + extra)
            if t.radius.kind == "equator":
                breaks.update((math.pi / 2 + bp).tolist())
                breaks.update((math.pi / 2 - bp).tolist())
            elif t.radius.kind == "point" and np.allclose(t.radius.center, pole):
                breaks.update(bp.tolist())
            elif t.radius.kind == "point" and np.allclose(t.radius.center, -pole):
                breaks.update((math.pi - bp).tolist())
            else:
                symmetric = False
        return _Radial(0.0, math.pi, tuple(sorted(breaks)), symmetric)
    # torus: a polar patch around a shared point center
    centers = {t.radius.center for t in metric.terms if t.radius.kind == "point"}
    if len(centers) != 1 or any(t.radius.kind != "point" for t in metric.terms):
        return _Radial(0.0, 0.0, (), False)
    support = max(t.profile.support_end for t in metric.terms)
    if support > 0.5 * float(np.min(base.sides)):
        return _Radial(0.0, 0.0, (), False)
    for t in metric.terms:
        breaks.update(t.profile.breakpoints + extra)
    return _Radial(0.0, support, tuple(sorted(breaks)), True,
                   np.asarray(next(iter(centers))))


def _ray_points(base: ModelManifold, radial: _Radial, rho: np.ndarray, omega: np.ndarray):
    """Points at radial coordinate rho in unit direction(s) omega (R^n)."""
    rho = np.asarray(rho, dtype=float)[..., None]
    if base.kind == "sphere":
        pole = base.north_pole
        om = np.zeros(omega.shape[:-1] + (base.ambient_dim,))
        om[..., : base.dim] = omega
        return np.cos(rho) * pole + np.sin(rho) * om
    if base.kind == "torus":
        return base.canonical(radial.center + rho * omega)
    return rho * omega


def _jacobian(base: ModelManifold, rho: np.ndarray) -> np.ndarray:
    n = base.dim
    if base.kind == "sphere":
        return np.sin(rho) ** (n - 1)
    return rho ** (n - 1)


def _tail_density(metric: ConformalMetric, power: float) -> float:
    """Density on the torus outside the bubble patch."""
    val = metric.scale
    for t in metric.terms:
        val *= float(t.profile.value(t.profile.support_end + 1.0)) ** t.exponent
    return val**power


# ---------------------------------------------------------------------------
# volume


def volume_nodes(metric: ConformalMetric, level: int, extra=()):
    """Quadrature nodes and their volume contributions under ``metric``.

    The contributions sum to the volume; summing a subset gives the volume
    of the region those nodes represent (used for restricted volumes).
    For the torus the background is a periodic trapezoid grid and the
    bubble is corrected on a polar patch, so patch contributions may be
    signed.
    """
    base = metric.base
    n = base.dim
    power = n / 2.0
    radial = _radial_structure(metric, extra)
    if base.kind == "torus":
        m = 2 ** (min(level, 6) + 2) if n == 2 else 2 ** (min(level, 3) + 2)
        axes = [(np.arange(m) + 0.5) * L / m for L in base.sides]
        G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        wbg = np.full(len(G), base.volume_g0() / len(G))
        if not radial.symmetric:
            return G, wbg * metric.factor(G) ** power
        tail = _tail_density(metric, power)
        rho, wr = radial_rule(radial.lo, radial.hi, radial.breaks, level)
        om, wo = sphere_rule(n, level)
        P = _ray_points(base, radial, rho[:, None], om[None, :]).reshape(-1, n)
        w = (wr * _jacobian(base, rho))[:, None] * wo[None, :]
        patch = w.ravel() * (metric.factor(P) ** power - tail)
        return np.concatenate([G, P]), np.concatenate([wbg * tail, patch])
    rho, wr = radial_rule(radial.lo, radial.hi, radial.breaks, level)
    om, wo = sphere_rule(n, level)
    P = _ray_points(base, radial, rho[:, None], om[None, :]).reshape(-1, base.ambient_dim)
    w = ((wr * _jacobian(base, rho))[:, None] * wo[None, :]).ravel()
    return P, w * metric.factor(P) ** power


def _volume_value(metric: ConformalMetric, level: int) -> tuple[float, int]:
    base = metric.base
    n = base.dim
    if metric.is_flat:
        return metric.scale ** (n / 2.0) * base.volume_g0(), 1
    radial = _radial_structure(metric)
    if radial.symmetric:
        # radial factor: the angular integral is exactly |S^(n-1)|
        rho, wr = radial_rule(radial.lo, radial.hi, radial.breaks, level)
        e1 = np.zeros(n)
        e1[0] = 1.0
        P = _ray_points(base, radial, rho, e1)
        dens = metric.factor(P) ** (n / 2.0)
        area = unit_sphere_area(n)
        if base.kind == "torus":
            tail = _tail_density(metric, n / 2.0)
            val = tail * base.volume_g0() + area * float(np.sum(wr * _jacobian(base, rho) * (dens - tail)))
        else:
            val = area * float(np.sum(wr * _jacobian(base, rho) * dens))
        return val, len(rho)
    P, contrib = volume_nodes(metric, level)
    return float(contrib.sum()), len(P)


def volume(metric: ConformalMetric, level: int = 6) -> QuadratureResult:
    """``Vol(M, g) = int c^(n/2) dVol_{g_0}`` with a level/level+1 error estimate."""
    if level < 1:
        raise UsageError("quadrature level must be >= 1")
    v, nodes = _volume_value(metric, level)
    v2, nodes2 = _volume_value(metric, level + 1)
    return QuadratureResult(v2, abs(v2 - v), nodes + nodes2)


def _restricted_value(metric, inside, level, extra, reach):
    base = metric.base
    power = base.dim / 2.0
    radial = _radial_structure(metric, extra)
    if base.kind == "torus" and radial.symmetric:
        hi = max(radial.hi, reach)
        if hi > 0.5 * float(np.min(base.sides)):
            raise UsageError("restricted region exceeds the torus polar patch")
        rho, wr = radial_rule(0.0, hi, radial.breaks, level)
        om, wo = sphere_rule(base.dim, level)
        P = _ray_points(base, radial, rho[:, None], om[None, :]).reshape(-1, base.dim)
        w = ((wr * _jacobian(base, rho))[:, None] * wo[None, :]).ravel()
        contrib = w * metric.factor(P) ** power
    else:
        P, contrib = volume_nodes(metric, level, extra)
    return float(contrib[np.asarray(inside(P), dtype=bool)].sum()), len(P)


def restricted_volume(metric: ConformalMetric, inside, level: int = 6, extra=(),
                      reach: float = 0.0) -> QuadratureResult:
    """Volume of ``{x : inside(x)}`` under ``metric``.

    ``extra`` lists term-radius values where the indicator jumps, so panels
    split there.  On the torus the region must lie within ``reach`` of the
    bubble center (the polar patch is widened to cover it).
    """
    v, n1 = _restricted_value(metric, inside, level, extra, reach)
    v2, n2 = _restricted_value(metric, inside, level + 1, extra, reach)
    return QuadratureResult(v2, abs(v2 - v), n1 + n2)


# ---------------------------------------------------------------------------
# boundary area


def _area_value(metric: ConformalMetric, level: int) -> tuple[float, int]:
    base = metric.base
    n = base.dim
    power = (n - 1) / 2.0
    radial = _radial_structure(metric)
    total, used = 0.0, 0
    for rb, _ in base.boundary_components():
        if radial.symmetric:
            e1 = np.zeros(n)
            e1[0] = rb
            total += float(metric.factor(e1[None, :])[0]) ** power * unit_sphere_area(n) * rb ** (n - 1)
            used += 1
        else:
            om, wo = sphere_rule(n, level)
            total += float(np.sum(wo * metric.factor(rb * om) ** power)) * rb ** (n - 1)
            used += len(om)
    return total, used


def boundary_area(metric: ConformalMetric, level: int = 6) -> QuadratureResult:
    """``Area(dM, g) = int_{dM} c^((n-1)/2) dA_{g_0}``."""
    base = metric.base
    if not base.has_boundary:
        raise UsageError(f"the {base.kind} has empty boundary; no boundary area")
    if level < 1:
        raise UsageError("quadrature level must be >= 1")
    a, n1 = _area_value(metric, level)
    a2, n2 = _area_value(metric, level + 1)
    return QuadratureResult(a2, abs(a2 - a), n1 + n2)
