"""Volume gap and boundary-area ratio at j=256 under c = f^2 and c = f."""

import dataclasses
import math

from vadblab.families import disk_blowup
from vadblab.measures import boundary_area, volume

j = 256
g = disk_blowup(2, 0.25, j)
term = g.terms[0]
variants = {"c = f^2": g,
            "c = f": dataclasses.replace(g, terms=(dataclasses.replace(term, exponent=1),),
                                         convention="phi")}
for name, m in variants.items():
    v, a = volume(m).value, boundary_area(m).value
    print(f"{name:8s} vol gap {100 * (v / math.pi - 1):6.2f}%   "
          f"area / (2 pi j^alpha) = {a / (2 * math.pi * j**0.25):.4f}")
