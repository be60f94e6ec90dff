"""Model manifolds, radial profiles and conformal metrics.

Every metric in the package is ``g = c(x) * g_0`` for one of four model
manifolds.  The pointwise multiplier ``c`` is a product of factor terms,
each a radial profile composed with a distance function and raised to an
exponent: 2 for families written as ``f^2 g_0`` and 1 for factors written
as ``phi g_0``.  Lengths scale by ``sqrt(c)`` and n-volumes by ``c^(n/2)``.

Points are stored in native coordinates: Cartesian for the disk, the
annulus and the (periodic) torus, unit vectors in R^(n+1) for the sphere.
The declared charts (polar for disk/annulus, colatitude-longitude for the
sphere) are available through :meth:`ModelManifold.from_chart` for n = 2.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, InputError, ParameterError, UsageError

DOMAIN_TOL = 1e-9
CONTINUITY_TOL = 1e-9
MAX_SUBDIVISION_LEVEL = 14
VARIATION_THRESHOLD = 1.10

_GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


# ---------------------------------------------------------------------------
# smoothstep helpers


def smoothstep(s):
    """Quintic smoothstep on [0, 1], clamped outside."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


def smoothstep_deriv(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0.0) & (s < 1.0)
    return np.where(inside, 30.0 * s * s * (1.0 - s) ** 2, 0.0)


def smoothstep_antideriv(s):
    """Antiderivative of the smoothstep with value 0 at 0."""
    s = np.asarray(s, dtype=float)
    return s**4 * (s * (s - 3.0) + 2.5)


def _plateau_weight(s):
    # 1 on [0, 1/2], smooth decay to 0 at s = 1
    s = np.asarray(s, dtype=float)
    return np.where(s <= 0.5, 1.0, 1.0 - smoothstep(2.0 * s - 1.0))


def _plateau_integral(s):
    # W(s) = int_s^1 weight(u) du, W(1) = 0, W(1/2) = 1/4
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    v = 2.0 * s - 1.0
    upper = 0.5 * (0.5 - v + smoothstep_antideriv(np.clip(v, 0.0, 1.0)))
    return np.where(s <= 0.5, 0.25 + (0.5 - s), upper)


# ---------------------------------------------------------------------------
# radial profiles


_SEGMENT_ARITY = {
    "const": 1,  # (value,)
    "smoothstep": 2,  # (start, end)
    "power_smoothstep": 4,  # (base, start_exponent, end_exponent, ramp)
    "dip": 1,  # (depth,)
    "log_plateau": 1,  # (rate,)
}


@dataclass(frozen=True)
class Segment:
    """One piece of a :class:`RadialProfile` between two breakpoints.

    Kinds and their parameters:

    ``const (v)``
        constant value ``v``.
    ``smoothstep (v0, v1)``
        quintic smoothstep from ``v0`` to ``v1`` with zero end slopes.
    ``power_smoothstep (base, e0, e1, ramp)``
        ``base ** (e0 + (e1 - e0) * S(s / ramp))``; the transition occupies
        the first ``ramp`` fraction of the segment.
    ``dip (h0)``
        even dip ``h0 + (1 - h0)(2x^2 - x^4)`` with ``x`` in [-1, 1] across
        the segment, value 1 and slope 0 at both ends.
    ``log_plateau (rate)``
        ``exp(rate * L * W(s))`` where ``L`` is the segment width and
        ``W' = -1`` on the first half, decaying smoothly to 0 at the end.
        Log-slope is exactly ``-rate`` at the start and 0 at the end.
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in _SEGMENT_ARITY:
            raise ParameterError(f"unknown segment kind {self.kind!r}")
        if len(self.params) != _SEGMENT_ARITY[self.kind]:
            raise ParameterError(
                f"segment {self.kind!r} takes {_SEGMENT_ARITY[self.kind]} parameters"
            )
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind == "power_smoothstep" and not 0.0 < self.params[3] <= 1.0:
            raise ParameterError("power_smoothstep ramp must lie in (0, 1]")

    @property
    def is_constant(self) -> bool:
        return self.kind == "const"

    def evaluate(self, s, width):
        """Value and r-derivative at local coordinate ``s`` in [0, 1]."""
        p = self.params
        if self.kind == "const":
            return np.full_like(s, p[0]), np.zeros_like(s)
        if self.kind == "smoothstep":
            v = p[0] + (p[1] - p[0]) * smoothstep(s)
            dv = (p[1] - p[0]) * smoothstep_deriv(s) / width
            return v, dv
        if self.kind == "power_smoothstep":
            base, e0, e1, ramp = p
            u = s / ramp
            v = base ** (e0 + (e1 - e0) * smoothstep(u))
            dv = v * math.log(base) * (e1 - e0) * smoothstep_deriv(u) / (ramp * width)
            return v, dv
        if self.kind == "dip":
            h0 = p[0]
            x = 2.0 * s - 1.0
            v = h0 + (1.0 - h0) * (2.0 * x * x - x**4)
            dv = (1.0 - h0) * (4.0 * x - 4.0 * x**3) * 2.0 / width
            return v, dv
        rate = p[0]
        v = np.exp(rate * width * _plateau_integral(s))
        dv = -v * rate * _plateau_weight(s)
        return v, dv

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}


@dataclass(frozen=True)
class RadialProfile:
    """Piecewise scalar function of one radius variable.

    The profile is defined on ``[b_0, inf)``: the first segment's value at
    ``b_0`` is used for smaller radii and the last segment's value at
    ``b_k`` beyond.  Value and slope must match at interior breakpoints.
    """

    breakpoints: tuple[float, ...]
    segments: tuple[Segment, ...]
    floor: float = 0.0
    name: str = ""

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "segments", tuple(self.segments))
        if len(bp) < 2 or len(self.segments) != len(bp) - 1:
            raise ParameterError("need k+1 breakpoints for k segments")
        if not all(np.isfinite(bp)) or any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ParameterError("breakpoints must be finite and strictly increasing")
        for i in range(1, len(bp) - 1):
            left = self.segments[i - 1].evaluate(np.array([1.0]), bp[i] - bp[i - 1])
            right = self.segments[i].evaluate(np.array([0.0]), bp[i + 1] - bp[i])
            scale = max(1.0, abs(float(left[0][0])))
            if abs(float(left[0][0] - right[0][0])) > CONTINUITY_TOL * scale:
                raise ParameterError(f"profile value jumps at breakpoint {bp[i]}")
            dscale = max(1.0, abs(float(left[1][0])))
            if abs(float(left[1][0] - right[1][0])) > CONTINUITY_TOL * dscale:
                raise ParameterError(f"profile slope jumps at breakpoint {bp[i]}")
        grid = np.concatenate(
            [np.linspace(b0, b1, 65) for b0, b1 in zip(bp, bp[1:])]
        )
        vals = self.value(grid)
        if np.any(vals <= 0.0):
            raise ParameterError("profile must be positive")
        if np.any(vals < self.floor - CONTINUITY_TOL):
            raise ParameterError(f"profile drops below declared floor {self.floor}")

    def _locate(self, r):
        r = np.asarray(r, dtype=float)
        bp = np.asarray(self.breakpoints)
        rc = np.clip(r, bp[0], bp[-1])
        idx = np.clip(np.searchsorted(bp, rc, side="right") - 1, 0, len(self.segments) - 1)
        return r, rc, idx

    def evaluate(self, r):
        r, rc, idx = self._locate(r)
        val = np.empty(rc.shape)
        der = np.zeros(rc.shape)
        bp = self.breakpoints
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if not np.any(mask):
                continue
            width = bp[k + 1] - bp[k]
            v, d = seg.evaluate((rc[mask] - bp[k]) / width, width)
            val[mask] = v
            der[mask] = d
        outside = (r < bp[0]) | (r > bp[-1])
        der[outside] = 0.0
        return val, der

    def value(self, r):
        return self.evaluate(r)[0]

    def derivative(self, r):
        return self.evaluate(r)[1]

    @cached_property
    def _flat_runs(self) -> list[tuple[float, float]]:
        """Merged maximal intervals on which the profile is constant."""
        bp = self.breakpoints
        runs: list[list[float]] = [[-math.inf, bp[0], float(self.value(bp[0]))]]
        for k, seg in enumerate(self.segments):
            if seg.is_constant:
                v = seg.params[0]
                if runs[-1][1] == bp[k] and runs[-1][2] == v:
                    runs[-1][1] = bp[k + 1]
                else:
                    runs.append([bp[k], bp[k + 1], v])
        tail = float(self.value(bp[-1]))
        if runs[-1][1] == bp[-1] and runs[-1][2] == tail:
            runs[-1][1] = math.inf
        else:
            runs.append([bp[-1], math.inf, tail])
        return [(a, b) for a, b, _ in runs]

    def constant_on(self, lo, hi):
        """True where ``[lo, hi]`` lies inside one constant stretch."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        out = np.zeros(np.broadcast(lo, hi).shape, dtype=bool)
        for a, b in self._flat_runs:
            out |= (lo >= a) & (hi <= b)
        return out

    @property
    def support_end(self) -> float:
        return self.breakpoints[-1]

    @property
    def feature_scale(self) -> float:
        return float(np.min(np.diff(self.breakpoints)))

    def critical_radii(self) -> np.ndarray:
        """Breakpoints and segment midpoints: where extreme values sit."""
        bp = np.asarray(self.breakpoints)
        mids = 0.5 * (bp[:-1] + bp[1:])
        return np.unique(np.concatenate([bp, mids]))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "floor": self.floor,
            "breakpoints": list(self.breakpoints),
            "segments": [s.to_dict() for s in self.segments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RadialProfile":
        return cls(
            breakpoints=tuple(d["breakpoints"]),
            segments=tuple(Segment(s["kind"], tuple(s["params"])) for s in d["segments"]),
            floor=float(d.get("floor", 0.0)),
            name=d.get("name", ""),
        )


# ---------------------------------------------------------------------------
# model manifolds


_KINDS = ("disk", "annulus", "sphere", "torus")


@dataclass(frozen=True)
class ModelManifold:
    """One of the four model manifolds with its flat or round metric g_0.

    ``params`` holds ``(R,)`` for the disk, ``(r_in, r_out)`` for the
    annulus, ``()`` for the unit sphere and the side lengths for the torus.
    """

    kind: str
    dim: int
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ParameterError(f"unknown manifold kind {self.kind!r}")
        if int(self.dim) != self.dim or self.dim < 2:
            raise ParameterError("dim must be an integer >= 2")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        p = self.params
        if self.kind == "disk" and (len(p) != 1 or p[0] <= 0):
            raise ParameterError("disk needs one positive radius")
        if self.kind == "annulus" and (len(p) != 2 or not 0 < p[0] < p[1]):
            raise ParameterError("annulus needs 0 < r_in < r_out")
        if self.kind == "sphere" and p:
            raise ParameterError("only the unit sphere is supported")
        if self.kind == "torus" and (len(p) != self.dim or min(p) <= 0):
            raise ParameterError("torus needs one positive side length per dimension")

    @classmethod
    def disk(cls, n: int = 2, radius: float = 1.0) -> "ModelManifold":
        return cls("disk", n, (radius,))

    @classmethod
    def annulus(cls, r_in: float = 1.0, r_out: float = 2.0, n: int = 2) -> "ModelManifold":
        return cls("annulus", n, (r_in, r_out))

    @classmethod
    def sphere(cls, n: int = 2) -> "ModelManifold":
        return cls("sphere", n, ())

    @classmethod
    def torus(cls, n: int = 2, side: float | Sequence[float] = 2 * math.pi) -> "ModelManifold":
        sides = tuple(side) if isinstance(side, (tuple, list)) else (side,) * n
        return cls("torus", n, sides)

    # -- basic geometry ---------------------------------------------------

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1 if self.kind == "sphere" else self.dim

    @property
    def has_boundary(self) -> bool:
        return self.kind in ("disk", "annulus")

    @property
    def chart(self) -> str:
        return {"disk": "polar", "annulus": "polar", "sphere": "colatitude-longitude",
                "torus": "periodic-cartesian"}[self.kind]

    @property
    def sides(self) -> np.ndarray:
        if self.kind != "torus":
            raise UsageError("side lengths exist only for the torus")
        return np.asarray(self.params)

    @property
    def north_pole(self) -> np.ndarray:
        e = np.zeros(self.ambient_dim)
        e[-1] = 1.0
        return e

    def boundary_components(self) -> list[tuple[float, int]]:
        """Boundary spheres as ``(radius, sign)``.

        ``sign`` is +1 when the inward normal points to growing ``|x|``
        (inner annulus circle) and -1 otherwise.
        """
        if self.kind == "disk":
            return [(self.params[0], -1)]
        if self.kind == "annulus":
            return [(self.params[0], +1), (self.params[1], -1)]
        return []

    def volume_g0(self) -> float:
        n = self.dim
        if self.kind == "disk":
            return unit_ball_volume(n) * self.params[0] ** n
        if self.kind == "annulus":
            return unit_ball_volume(n) * (self.params[1] ** n - self.params[0] ** n)
        if self.kind == "sphere":
            return unit_sphere_area(n + 1)
        return float(np.prod(self.params))

    def boundary_area_g0(self) -> float:
        return sum(unit_sphere_area(self.dim) * r ** (self.dim - 1)
                   for r, _ in self.boundary_components())

    # -- point handling ---------------------------------------------------

    def as_points(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[-1] != self.ambient_dim:
            raise DomainError(
                f"{self.kind} points need {self.ambient_dim} coordinates, got {X.shape[-1]}"
            )
        if not np.all(np.isfinite(X)):
            raise InputError("non-finite coordinates")
        return X

    def inside(self, X, tol: float = DOMAIN_TOL) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.kind == "torus":
            return np.ones(X.shape[:-1], dtype=bool)
        norm = np.linalg.norm(X, axis=-1)
        if self.kind == "sphere":
            return np.abs(norm - 1.0) <= tol
        if self.kind == "disk":
            return norm <= self.params[0] * (1.0 + tol)
        return (norm >= self.params[0] * (1.0 - tol)) & (norm <= self.params[1] * (1.0 + tol))

    def check_points(self, X) -> np.ndarray:
        X = self.as_points(X)
        bad = ~self.inside(X)
        if np.any(bad):
            first = X[np.argmax(bad)]
            raise DomainError(f"point {first.tolist()} lies outside the {self.kind}")
        return self.canonical(X)

    def canonical(self, X) -> np.ndarray:
        """Wrap torus points into the fundamental box, renormalize sphere points."""
        X = np.asarray(X, dtype=float)
        if self.kind == "torus":
            return np.mod(X, self.sides)
        if self.kind == "sphere":
            return X / np.linalg.norm(X, axis=-1, keepdims=True)
        return X

    def min_image(self, D) -> np.ndarray:
        L = self.sides
        return D - L * np.round(D / L)

    def distance(self, A, B) -> np.ndarray:
        """g_0 length of the base segment joining A and B (the geodesic for
        disk, sphere and torus; the chord for the annulus)."""
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        if self.kind == "sphere":
            dot = np.clip(np.sum(A * B, axis=-1), -1.0, 1.0)
            # atan2 form is accurate for nearly equal points
            cross = np.linalg.norm(A - B, axis=-1) * np.linalg.norm(A + B, axis=-1) / 2.0
            return np.arctan2(cross, dot)
        D = B - A
        if self.kind == "torus":
            D = self.min_image(D)
        return np.linalg.norm(D, axis=-1)

    def segment_points(self, A, B, s) -> np.ndarray:
        """Points at parameters ``s`` along the base segments A->B.

        ``A`` and ``B`` have shape (E, d); ``s`` has shape (E, k) or (k,).
        The parametrization has constant g_0 speed.
        """
        A = np.asarray(A, dtype=float)[:, None, :]
        B = np.asarray(B, dtype=float)[:, None, :]
        s = np.asarray(s, dtype=float)
        if s.ndim == 1:
            s = np.broadcast_to(s, (A.shape[0], s.shape[0]))
        s = s[..., None]
        if self.kind == "sphere":
            omega = self.distance(A[:, 0], B[:, 0])[:, None, None]
            small = omega < 1e-7
            if np.any(omega > math.pi - 1e-9):
                raise DomainError("antipodal sphere segment has no unique geodesic")
            so = np.where(small, 1.0, np.sin(omega))
            wa = np.where(small, 1.0 - s, np.sin((1.0 - s) * omega) / so)
            wb = np.where(small, s, np.sin(s * omega) / so)
            P = wa * A + wb * B
            return P / np.linalg.norm(P, axis=-1, keepdims=True)
        D = B - A
        if self.kind == "torus":
            D = self.min_image(D)
            return np.mod(A + s * D, self.sides)
        return A + s * D

    def boundary_distance(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if not self.has_boundary:
            raise UsageError(f"the {self.kind} has empty boundary")
        r = np.linalg.norm(X, axis=-1)
        if self.kind == "disk":
            return np.maximum(self.params[0] - r, 0.0)
        return np.maximum(np.minimum(r - self.params[0], self.params[1] - r), 0.0)

    def g0(self, X, V) -> np.ndarray:
        """Base quadratic form g_0(v, v) at native points."""
        X = np.asarray(X, dtype=float)
        V = np.asarray(V, dtype=float)
        if self.kind == "sphere":
            normal = np.abs(np.sum(X * V, axis=-1))
            if np.any(normal > 1e-9 * np.maximum(1.0, np.linalg.norm(V, axis=-1))):
                raise DomainError("sphere vector is not tangent at its base point")
        return np.sum(V * V, axis=-1)

    def from_chart(self, point, v=None):
        """Map chart coordinates (and a chart vector) to native ones (n = 2)."""
        point = np.asarray(point, dtype=float)
        if not np.all(np.isfinite(point)) or (v is not None and not np.all(np.isfinite(v))):
            raise InputError("non-finite chart input")
        if self.kind == "torus":
            return point, (None if v is None else np.asarray(v, dtype=float))
        if self.dim != 2:
            raise DomainError("chart coordinates are implemented for n = 2")
        a, b = point
        if self.kind in ("disk", "annulus"):
            if a < 0:
                raise DomainError("polar radius must be nonnegative")
            x = np.array([a * math.cos(b), a * math.sin(b)])
            J = np.array([[math.cos(b), -a * math.sin(b)], [math.sin(b), a * math.cos(b)]])
        else:
            if not 0.0 <= a <= math.pi:
                raise DomainError("colatitude must lie in [0, pi]")
            x = np.array([math.sin(a) * math.cos(b), math.sin(a) * math.sin(b), math.cos(a)])
            J = np.array([
                [math.cos(a) * math.cos(b), -math.sin(a) * math.sin(b)],
                [math.cos(a) * math.sin(b), math.sin(a) * math.cos(b)],
                [-math.sin(a), 0.0],
            ])
        return x, (None if v is None else J @ np.asarray(v, dtype=float))

    def sample_uniform(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Points distributed by the g_0 volume measure."""
        n = self.dim
        if self.kind == "torus":
            return rng.random((count, n)) * self.sides
        g = rng.standard_normal((count, self.ambient_dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        if self.kind == "sphere":
            return g
        u = rng.random(count)
        if self.kind == "disk":
            r = self.params[0] * u ** (1.0 / n)
        else:
            a, b = self.params
            r = (a**n + u * (b**n - a**n)) ** (1.0 / n)
        return g * r[:, None]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelManifold":
        return cls(d["kind"], int(d["dim"]), tuple(d.get("params", ())))


def unit_ball_volume(n: int) -> float:
    """omega_n, volume of the Euclidean unit n-ball (closed form)."""
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def unit_sphere_area(n: int) -> float:
    """(n-1)-volume of the unit sphere in R^n."""
    return n * unit_ball_volume(n)


# ---------------------------------------------------------------------------
# conformal metrics


_RADIUS_KINDS = ("boundary", "point", "equator")


@dataclass(frozen=True)
class RadiusSpec:
    """Distance function a profile is composed with."""

    kind: str
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in _RADIUS_KINDS:
            raise ParameterError(f"unknown radius kind {self.kind!r}")
        if self.kind == "point":
            if self.center is None:
                raise ParameterError("point radius needs a center")
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def evaluate(self, base: ModelManifold, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.kind == "boundary":
            return base.boundary_distance(X)
        if self.kind == "equator":
            if base.kind != "sphere":
                raise UsageError("distance to the equator needs a sphere")
            return np.abs(np.arcsin(np.clip(X[..., -1], -1.0, 1.0)))
        c = np.asarray(self.center)
        if base.kind == "sphere":
            return base.distance(X, np.broadcast_to(c, X.shape))
        D = X - c
        if base.kind == "torus":
            D = base.min_image(D)
        return np.linalg.norm(D, axis=-1)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.center is not None:
            d["center"] = list(self.center)
        return d


@dataclass(frozen=True)
class FactorTerm:
    profile: RadialProfile
    radius: RadiusSpec
    exponent: int = 2

    def __post_init__(self):
        if self.exponent not in (1, 2):
            raise ParameterError("exponent is 2 (f^2 g_0) or 1 (phi g_0)")

    def evaluate(self, base: ModelManifold, X) -> np.ndarray:
        return self.profile.value(self.radius.evaluate(base, X)) ** self.exponent

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "radius": self.radius.to_dict(),
                "profile": self.profile.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "FactorTerm":
        r = d["radius"]
        return cls(
            profile=RadialProfile.from_dict(d["profile"]),
            radius=RadiusSpec(r["kind"], tuple(r["center"]) if "center" in r else None),
            exponent=int(d["exponent"]),
        )


@dataclass(frozen=True)
class ConformalMetric:
    """``g = c(x) g_0`` with ``c = scale * prod(term)``.

    ``convention`` records how the family was written: ``"f2"`` for
    ``f^2 g_0``, ``"phi"`` for ``phi g_0``, ``"const"`` for a constant
    multiple, joined with ``*`` for products.  ``below_constant`` is the
    declared C_j when the metric is tagged as ``g >= (1 - C_j) g_0``.
    """

    base: ModelManifold
    terms: tuple[FactorTerm, ...] = ()
    scale: float = 1.0
    convention: str = "const"
    label: str = ""
    below_constant: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ParameterError("metric scale must be positive and finite")

    @classmethod
    def flat(cls, base: ModelManifold, c: float = 1.0, label: str = "") -> "ConformalMetric":
        return cls(base, (), float(c), "const", label or ("g0" if c == 1.0 else f"{c}*g0"))

    def factor(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[:-1], self.scale)
        for term in self.terms:
            out = out * term.evaluate(self.base, X)
        return out

    def times(self, other: "ConformalMetric", label: str = "") -> "ConformalMetric":
        """Pointwise product of two conformal factors on the same base."""
        if other.base != self.base:
            raise UsageError("metrics live on different manifolds")
        conv = self.convention if other.convention == "const" else (
            other.convention if self.convention == "const"
            else f"{other.convention}*{self.convention}")
        return ConformalMetric(self.base, other.terms + self.terms, self.scale * other.scale,
                               conv, label or f"{other.label}*{self.label}")

    def rescaled(self, k: float, label: str = "") -> "ConformalMetric":
        return ConformalMetric(self.base, self.terms, self.scale * k, self.convention,
                               label or f"{k:g}*{self.label}", None)

    @property
    def is_flat(self) -> bool:
        return not self.terms

    @property
    def feature_scale(self) -> float:
        return min((t.profile.feature_scale for t in self.terms), default=math.inf)

    def probe_points(self) -> np.ndarray:
        """Points where each term's profile attains its breakpoint and
        midpoint values; extreme factor values of the shipped families
        sit at such points."""
        pts = []
        base = self.base
        for term in self.terms:
            radii = term.profile.critical_radii()
            radii = radii[radii >= 0.0]
            pts.extend(_radius_ray(base, term.radius, radii))
        if not pts:
            return np.empty((0, base.ambient_dim))
        P = np.asarray(pts)
        return P[base.inside(P)]

    def to_dict(self) -> dict:
        return {
            "manifold": self.base.to_dict(),
            "scale": self.scale,
            "convention": self.convention,
            "label": self.label,
            "below_constant": self.below_constant,
            "terms": [t.to_dict() for t in self.terms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConformalMetric":
        return cls(
            base=ModelManifold.from_dict(d["manifold"]),
            terms=tuple(FactorTerm.from_dict(t) for t in d.get("terms", [])),
            scale=float(d.get("scale", 1.0)),
            convention=d.get("convention", "const"),
            label=d.get("label", ""),
            below_constant=d.get("below_constant"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @cached_property
    def token(self) -> str:
        """Identity token used to key cached edge weights."""
        return hashlib.sha1(self.to_json().encode()).hexdigest()[:16]


def _radius_ray(base: ModelManifold, radius: RadiusSpec, radii: np.ndarray) -> list:
    e1 = np.zeros(base.ambient_dim)
    e1[0] = 1.0
    out = []
    if radius.kind == "boundary":
        for rb, sign in base.boundary_components():
            out.extend((rb + sign * r) * e1 for r in radii if rb + sign * r >= 0)
    elif radius.kind == "equator":
        for r in radii:
            for lat in (r, -r):
                out.append(np.array([math.cos(lat), 0.0, math.sin(lat)]))
    else:
        c = np.asarray(radius.center)
        if base.kind == "sphere":
            u = e1 - np.dot(e1, c) * c
            if np.linalg.norm(u) < 1e-12:
                u = np.zeros_like(c)
                u[1] = 1.0
            u /= np.linalg.norm(u)
            out.extend(math.cos(r) * c + math.sin(r) * u for r in radii)
        else:
            out.extend(base.canonical(c + r * e1) for r in radii)
    return out


# ---------------------------------------------------------------------------
# operations


def eval_metric(metric: ConformalMetric, point, v, chart: bool = False):
    """Squared length ``g(v, v) = c(point) g_0(v, v)``.

    With ``chart=True`` the point and vector are read in the manifold's
    declared chart (n = 2), otherwise in native coordinates.  Scalar input
    gives a float, batched input an array.
    """
    base = metric.base
    if chart:
        point, v = base.from_chart(point, v)
    P = base.as_points(point)
    V = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(V)):
        raise InputError("non-finite tangent vector")
    V = V.reshape(P.shape)
    P = base.check_points(P)
    val = metric.factor(P) * base.g0(P, V)
    return float(val[0]) if np.ndim(point) == 1 else val


@dataclass(frozen=True)
class LengthResult:
    value: float
    tolerance: float
    subsegments: int


def _interval_lengths(metric: ConformalMetric, A, B, L0, s0, width):
    """Coarse and half-split 2-point Gauss lengths on sub-intervals
    ``[s0, s0 + width]`` of the segments A->B, plus the refine flag."""
    g0, g1 = _GAUSS
    unit = np.array([0.0, g0, g1, 1.0, 0.5 * g0, 0.5 * g1, 0.5 + 0.5 * g0, 0.5 + 0.5 * g1])
    s = s0[:, None] + width[:, None] * unit[None, :]
    P = metric.base.segment_points(A, B, s)
    c = metric.factor(P)
    if np.any(c <= 0) or not np.all(np.isfinite(c)):
        raise DomainError("conformal factor must be positive along curves")
    root = np.sqrt(c)
    scale = L0 * width
    coarse = scale * root[:, 1:3].mean(axis=1)
    fine = scale * root[:, 4:8].mean(axis=1)
    ends = c[:, :4]
    flag = ends.max(axis=1) / ends.min(axis=1) > VARIATION_THRESHOLD
    return coarse, fine, flag, P


def edge_lengths(metric: ConformalMetric, A, B, max_level: int = MAX_SUBDIVISION_LEVEL,
                 check_domain: bool = True, chunk_points: int = 1_000_000):
    """Lengths of the base segments A[i] -> B[i] under ``metric``.

    Segments on which every factor term is provably constant (the distance
    functions are 1-Lipschitz, so each radius stays within
    ``(rA + rB -/+ L) / 2``) are integrated exactly with one sub-segment.
    The others start from a subdivision fine enough to see the profile's
    narrowest feature and are refined while the factor varies by more than
    10% across a sub-segment, up to ``2**max_level`` sub-segments.
    Returns ``(lengths, error_estimates, subsegment_counts)``.
    """
    base = metric.base
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    E = len(A)
    L0 = base.distance(A, B)
    level = np.zeros(E, dtype=int)
    varying = np.zeros(E, dtype=bool)
    for term in metric.terms:
        rA = term.radius.evaluate(base, A)
        rB = term.radius.evaluate(base, B)
        lo = 0.5 * (rA + rB - L0)
        hi = 0.5 * (rA + rB + L0)
        v = ~term.profile.constant_on(lo, hi)
        if np.any(v):
            need = np.ceil(np.log2(np.maximum(L0[v] / (0.5 * term.profile.feature_scale), 1.0)))
            level[v] = np.maximum(level[v], need.astype(int))
        varying |= v
    level = np.minimum(level, max_level)

    lengths = np.empty(E)
    errors = np.zeros(E)
    counts = np.ones(E, dtype=int)

    # constant-factor segments: sqrt(c) times the base length
    const = ~varying
    if np.any(const):
        mid = base.segment_points(A[const], B[const], np.array([0.5]))[:, 0]
        lengths[const] = L0[const] * np.sqrt(metric.factor(mid))
        if check_domain and base.kind == "annulus":
            _check_annulus_segments(base, mid)

    # adaptive part: split sub-intervals whose factor varies by more than
    # the threshold, down to 2**max_level sub-intervals per edge
    pending = np.flatnonzero(varying)
    lengths[pending] = 0.0
    counts[pending] = 0
    reps = 2 ** level[pending]
    edge = np.repeat(pending, reps)
    depth = np.repeat(level[pending], reps)
    offs = np.arange(edge.size) - np.repeat(np.cumsum(reps) - reps, reps)
    start = offs * 0.5**depth
    step = max(1, chunk_points // 8)
    while edge.size:
        nxt_e, nxt_s, nxt_d = [], [], []
        for i0 in range(0, edge.size, step):
            e, s0, d = edge[i0:i0 + step], start[i0:i0 + step], depth[i0:i0 + step]
            w = 0.5**d
            coarse, fine, flag, P = _interval_lengths(metric, A[e], B[e], L0[e], s0, w)
            if check_domain and base.kind == "annulus":
                _check_annulus_segments(base, P.reshape(-1, P.shape[-1]))
            flag &= d < max_level
            ok = ~flag
            np.add.at(lengths, e[ok], fine[ok])
            np.add.at(errors, e[ok], np.abs(fine[ok] - coarse[ok]))
            np.add.at(counts, e[ok], 2)
            if np.any(flag):
                ef, sf, df = e[flag], s0[flag], d[flag] + 1
                half = 0.5**df
                nxt_e.append(np.concatenate([ef, ef]))
                nxt_s.append(np.concatenate([sf, sf + half]))
                nxt_d.append(np.concatenate([df, df]))
        if not nxt_e:
            break
        edge, start, depth = np.concatenate(nxt_e), np.concatenate(nxt_s), np.concatenate(nxt_d)
    return lengths, errors, counts


def _check_annulus_segments(base: ModelManifold, P):
    r = np.linalg.norm(P, axis=-1)
    if np.any(r < base.params[0] * (1.0 - DOMAIN_TOL)):
        raise DomainError("segment crosses the annulus hole")


def curve_length(metric: ConformalMetric, curve, budget: int = MAX_SUBDIVISION_LEVEL) -> LengthResult:
    """Length of a polyline (native coordinates) under ``metric``.

    ``budget`` caps the subdivision of each polyline edge at
    ``2**budget`` sub-segments.
    """
    if budget < 1:
        raise InputError("subdivision budget must be >= 1")
    base = metric.base
    P = base.check_points(curve)
    if len(P) < 2:
        return LengthResult(0.0, 0.0, 0)
    lengths, errors, counts = edge_lengths(metric, P[:-1], P[1:], max_level=budget)
    return LengthResult(float(lengths.sum()), float(errors.sum()), int(counts.sum()))


@dataclass(frozen=True)
class ComparisonResult:
    holds: bool
    min_ratio: float
    witness: np.ndarray = field(compare=False)


def comparison_samples(base: ModelManifold, metrics: Iterable[ConformalMetric],
                       count: int = 2000, seed: int = 0) -> np.ndarray:
    """Seeded volume-uniform sample plus every metric's probe points."""
    rng = np.random.default_rng(seed)
    parts = [base.sample_uniform(count, rng)]
    parts.extend(m.probe_points() for m in metrics)
    return np.concatenate(parts, axis=0)


def comparison_check(a: ConformalMetric, b: ConformalMetric, lam: float,
                     samples) -> ComparisonResult:
    """Check ``g_a >= lam * g_b`` on sample points via the factor ratio."""
    if a.base != b.base:
        raise UsageError("comparison needs metrics on the same manifold")
    X = a.base.check_points(samples)
    if len(X) == 0:
        raise UsageError("sample plan is empty")
    ratio = a.factor(X) / b.factor(X)
    i = int(np.argmin(ratio))
    return ComparisonResult(bool(ratio[i] >= lam), float(ratio[i]), X[i].copy())
