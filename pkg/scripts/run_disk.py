"""Disk blow-up sequence at the reference resolution (h=0.02, kappa=4)."""

import math

from _common import outdir, parser
from vadblab import FamilySpec, RunConfig, run_experiment
from vadblab.families import disk_blowup_volume_bounds

p = parser(__doc__)
p.add_argument("--j", default="4,16,64,256")
p.add_argument("--alpha", type=float, default=0.25)
p.add_argument("--h", type=float, default=0.02)
args = p.parse_args()

out = outdir(args.out)
js = [int(s) for s in args.j.split(",")]
report = run_experiment(FamilySpec("disk_blowup", 2, js[0], alpha=args.alpha), js,
                        RunConfig(h=args.h, kappa=4.0),
                        progress=lambda r: print(f"j={r.j} done in {r.seconds:.1f}s"))
(out / "disk_blowup.csv").write_text(report.to_csv())
(out / "disk_blowup.json").write_text(report.to_json())
print(f"{'j':>5} {'vol':>9} {'upper':>9} {'area/2pi j^a':>12} {'diam_lo':>8} {'frac':>8} {'bound':>8}")
for r in report.rows:
    lo, hi = disk_blowup_volume_bounds(2, args.alpha, r.j)
    v = r.verdict
    print(f"{r.j:5d} {v.volume:9.4f} {hi:9.4f} {v.area / (2 * math.pi * r.j**args.alpha):12.6f} "
          f"{v.diam_lower:8.4f} {r.stats.frac_excess:8.4f} {r.bound.value:8.4f}")
print("trend:", {k: report.trend[k] for k in ("flat_bound_decreasing", "flat_bound_last")})
