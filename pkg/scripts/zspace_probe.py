"""Glued comparison space for the disk family on a small mesh."""

import numpy as np

from _common import outdir, parser
from vadblab import FamilySpec
from vadblab.meshgeo import build_mesh
from vadblab.vadb import flat_bound, select_good_set
from vadblab.zspace import build_zspace, save_zspace, z_distances_from

p = parser(__doc__)
p.add_argument("--j", type=int, default=16)
p.add_argument("--h", type=float, default=0.15)
args = p.parse_args()

out = outdir(args.out)
fam = FamilySpec("disk_blowup", 2, args.j, alpha=0.25)
mesh = build_mesh(fam.base(), args.h, 3.0)
g0, gj = fam.g0(), fam.metric()
gs = select_good_set(mesh, gj, g0, 0.05, sources=12)
h_j = max(flat_bound(2.4, 0, 0, 0, gs.delta_hat).h_j, 3 * args.h)
z = build_zspace(mesh, g0, gj, gs.mask, h_j)
x = np.flatnonzero(gs.mask)
D = z_distances_from(z, z.phi0(x))
print(f"{mesh.n_vertices} vertices, |W_j|={gs.size}, h_j={h_j:.3f}, {z.levels} neck levels")
print(f"max d_Z(phi0 x, phij x) = {D[np.arange(len(x)), z.phij(x)].max():.4f}")
save_zspace(z, out / "zspace.json")
