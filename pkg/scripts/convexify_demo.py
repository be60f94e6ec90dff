"""Boundary convexification of an annulus and the clearance of shortest paths."""

from _common import outdir, parser
from vadblab.cli import path_clearance
from vadblab.collar import build_collar, build_convexifier, sff_min_eigen
from vadblab.meshgeo import build_mesh
from vadblab.metric_core import ConformalMetric, ModelManifold

p = parser(__doc__)
p.add_argument("--t1", type=float, default=0.2)
args = p.parse_args()

out = outdir(args.out)
A = ModelManifold.annulus(1.0, 2.0)
chart = build_collar(A)
cv = build_convexifier(chart, args.t1)
g0 = ConformalMetric.flat(A)
lines = []
for label, g in (("g0", g0), ("phi*g0", cv.apply(g0))):
    for k in (0, 1):
        lines.append(f"{label} component {k}: sff_min_eigen = "
                     f"{sff_min_eigen(g, chart, component=k).value:.6f}")
res = path_clearance(build_mesh(A, 0.04, 4.0), cv, 100)
lines.append(f"100 shortest paths under phi*g0: min boundary distance {res['min_depth']:.4f}")
print("\n".join(lines))
(out / "convexify.txt").write_text("\n".join(lines) + "\n")
