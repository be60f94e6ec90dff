"""The three example sequences: disk blow-up, cinched sphere, torus bubble."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .errors import ParameterError
from .metric_core import (
    ConformalMetric,
    FactorTerm,
    ModelManifold,
    RadialProfile,
    RadiusSpec,
    Segment,
    smoothstep,
)

FAMILIES = ("disk_blowup", "cinched_sphere", "torus_bubble", "constant")

# fraction of [1, 2] over which the torus bubble profile h_j decays from j to 1
TORUS_RAMP = 0.125


@dataclass(frozen=True)
class FamilySpec:
    """A member of one of the example sequences.

    ``family`` is one of ``disk_blowup`` (needs ``alpha``), ``cinched_sphere``
    (needs ``h0``), ``torus_bubble`` or ``constant`` (the trivial sequence
    ``g_j = g_0`` on ``manifold``).
    """

    family: str
    n: int = 2
    j: int = 4
    alpha: float | None = None
    h0: float | None = None
    manifold: str = "disk"
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.j < 3:
            raise ParameterError("sequence index j must be >= 3")
        if self.family == "disk_blowup":
            _check_alpha(self.n, self.alpha)
        if self.family == "cinched_sphere":
            _check_h0(self.h0)

    def with_j(self, j: int) -> "FamilySpec":
        return FamilySpec(self.family, self.n, j, self.alpha, self.h0, self.manifold, self.extra)

    def params_label(self) -> str:
        if self.family == "disk_blowup":
            return f"alpha={self.alpha:g}"
        if self.family == "cinched_sphere":
            return f"h0={self.h0:g}"
        if self.family == "constant":
            return f"manifold={self.manifold}"
        return ""

    def base(self) -> ModelManifold:
        if self.family == "disk_blowup":
            return ModelManifold.disk(self.n)
        if self.family == "cinched_sphere":
            return ModelManifold.sphere(self.n)
        if self.family == "torus_bubble":
            return ModelManifold.torus(self.n)
        return _named_manifold(self.manifold, self.n)

    def g0(self) -> ConformalMetric:
        return ConformalMetric.flat(self.base())

    def metric(self) -> ConformalMetric:
        if self.family == "disk_blowup":
            return disk_blowup(self.n, self.alpha, self.j)
        if self.family == "cinched_sphere":
            return cinched_sphere(self.n, self.h0, self.j)
        if self.family == "torus_bubble":
            return torus_bubble(self.n, self.j)
        return ConformalMetric.flat(self.base(), label=f"constant_j{self.j}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FamilySpec":
        keys = ("family", "n", "j", "alpha", "h0", "manifold")
        return cls(**{k: d[k] for k in keys if k in d and d[k] is not None})


def _named_manifold(name: str, n: int) -> ModelManifold:
    makers = {"disk": ModelManifold.disk, "sphere": ModelManifold.sphere,
              "torus": ModelManifold.torus}
    if name == "annulus":
        return ModelManifold.annulus(n=n)
    if name not in makers:
        raise ParameterError(f"unknown manifold {name!r}")
    return makers[name](n)


def _check_alpha(n, alpha):
    if alpha is None or not 0.0 < alpha < 1.0 / n:
        raise ParameterError(f"alpha={alpha} violates 0 < alpha < 1/n = {1.0 / n:g}")


def _check_h0(h0):
    if h0 is None or not 0.0 < h0 < 1.0:
        raise ParameterError(f"h0={h0} violates 0 < h0 < 1")


def _check_j(j):
    if int(j) != j or j < 3:
        raise ParameterError("sequence index j must be an integer >= 3")


def disk_blowup_profile(n: int, alpha: float, j: int) -> RadialProfile:
    peak = float(j) ** alpha
    return RadialProfile(
        breakpoints=(0.0, 1.0 / j, 2.0 / j),
        segments=(Segment("const", (peak,)), Segment("smoothstep", (peak, 1.0))),
        floor=1.0,
        name=f"disk_blowup f_j (alpha={alpha:g}, j={j})",
    )


def disk_blowup(n: int, alpha: float, j: int) -> ConformalMetric:
    """``g_j = f_j^2 g_0`` on the unit n-disk, radial from the boundary.

    ``f_j = j**alpha`` within ``1/j`` of the boundary, a quintic smoothstep
    down to 1 across ``[1/j, 2/j]`` and 1 beyond.
    """
    _check_alpha(n, alpha)
    _check_j(j)
    term = FactorTerm(disk_blowup_profile(n, alpha, j), RadiusSpec("boundary"), 2)
    return ConformalMetric(ModelManifold.disk(n), (term,), 1.0, "f2",
                           f"disk_blowup(n={n},alpha={alpha:g},j={j})")


def cinch_profile(h0: float, j: int) -> RadialProfile:
    half = math.pi / 2.0
    return RadialProfile(
        breakpoints=(0.0, half - 1.0 / j, half + 1.0 / j, math.pi),
        segments=(Segment("const", (1.0,)), Segment("dip", (h0,)), Segment("const", (1.0,))),
        floor=h0,
        name=f"cinch f_j (h0={h0:g}, j={j})",
    )


def cinched_sphere(n: int, h0: float, j: int) -> ConformalMetric:
    """``g_j = f_j^2 g_0`` on the round n-sphere, radial in colatitude.

    Inside the band ``|r - pi/2| <= 1/j`` the factor follows the even dip
    ``h(x) = h0 + (1 - h0)(2x^2 - x^4)``, ``x = j (r - pi/2)``.
    """
    _check_h0(h0)
    _check_j(j)
    base = ModelManifold.sphere(n)
    term = FactorTerm(cinch_profile(h0, j), RadiusSpec("point", tuple(base.north_pole)), 2)
    return ConformalMetric(base, (term,), 1.0, "f2", f"cinched_sphere(n={n},h0={h0:g},j={j})")


def torus_bubble_psi(s, ramp: float = TORUS_RAMP):
    """Exponent psi with ``h_j(s) = j**psi(s)`` on [1, 2]."""
    return 1.0 - smoothstep((np.asarray(s, dtype=float) - 1.0) / ramp)


def torus_bubble_profile(j: int, ramp: float = TORUS_RAMP) -> RadialProfile:
    return RadialProfile(
        breakpoints=(0.0, 1.0 / j, 2.0 / j),
        segments=(Segment("const", (float(j),)),
                  Segment("power_smoothstep", (float(j), 1.0, 0.0, ramp))),
        floor=1.0,
        name=f"torus_bubble f_j (j={j})",
    )


def torus_bubble(n: int, j: int, side: float = 2 * math.pi,
                 ramp: float = TORUS_RAMP) -> ConformalMetric:
    """``g_j = f_j^2 g_0`` on the flat torus, radial from the center point.

    ``f_j = j`` on the ball of radius ``1/j`` and ``h_j(j r)`` on
    ``[1/j, 2/j]`` with ``h_j = j**psi``.
    """
    _check_j(j)
    if side < 4.0 / j + 1e-6:
        raise ParameterError("torus side is too small for the bubble region")
    base = ModelManifold.torus(n, side)
    center = tuple(np.full(n, side / 2.0))
    term = FactorTerm(torus_bubble_profile(j, ramp), RadiusSpec("point", center), 2)
    return ConformalMetric(base, (term,), 1.0, "f2", f"torus_bubble(n={n},j={j})")


def check_construction_hyp(n: int, j: int, h=None, ramp: float = TORUS_RAMP) -> float:
    """``j**-n * int_1^2 h_j(s)**n s**(n-1) ds`` by adaptive quadrature.

    ``h`` overrides the shipped ``h_j`` with any callable of ``s``.
    """
    _check_j(j)
    if h is None:
        # j**-n h_j**n = j**(n (psi - 1)); evaluated in log form
        def integrand(s):
            return float(j) ** (n * (torus_bubble_psi(s, ramp) - 1.0)) * s ** (n - 1)
        pts = [1.0 + ramp] if ramp < 1.0 else None
    else:
        def integrand(s):
            return (h(s) / j) ** n * s ** (n - 1)
        pts = None
    val, _ = integrate.quad(integrand, 1.0, 2.0, points=pts, limit=200,
                            epsabs=1e-13, epsrel=1e-11)
    return float(val)


def constant_sequence(base: ModelManifold) -> ConformalMetric:
    return ConformalMetric.flat(base)


def disk_blowup_volume_bounds(n: int, alpha: float, j: int) -> tuple[float, float]:
    """Lower and upper volume bounds for the disk blow-up member.

    Lower: ``f_j >= 1`` gives ``Vol(g_j) >= omega_n``.  Upper:
    ``j**(alpha n) omega_n (1 - (1 - 2/j)**n) + omega_n (1 - 1/j)**n``.
    """
    from .metric_core import unit_ball_volume

    w = unit_ball_volume(n)
    upper = j ** (alpha * n) * w * (1 - (1 - 2.0 / j) ** n) + w * (1 - 1.0 / j) ** n
    return w, upper
