"""The glued comparison space Z at mesh scale.

Z is built from three pieces over one shared mesh: a copy of (M, g_0), a
product neck ``M x [0, h_j]`` carrying ``g_j + dh^2`` and a copy of
(M, g_j).  The bottom of the neck is identified with the g_0 copy and the
top of the neck with the good set W_j of the g_j copy.  Identifications
are realized by merging vertices, never by zero-weight edges.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import UsageError
from .meshgeo import MeshGraph
from .metric_core import ConformalMetric

BLOCK_M0, BLOCK_NECK, BLOCK_MJ = 0, 1, 2


@dataclass
class ZSpaceGraph:
    """Vertex blocks and weighted edges of the glued space.

    Node ``level * N + x`` is the neck vertex over mesh vertex ``x`` at
    height ``level * h_j / (m - 1)``; level 0 doubles as the g_0 copy.
    The g_j copy reuses top-level nodes on the glued set and gets fresh
    ids ``m * N + rank`` elsewhere.
    """

    mesh: MeshGraph
    h_j: float
    levels: int
    good: np.ndarray  # bool mask of glued M_j vertices
    phi_j_ids: np.ndarray
    adjacency: sparse.csr_matrix
    block: np.ndarray
    level: np.ndarray
    status: str = "ok"
    closure: bool = False
    _dist_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def phi0(self, x):
        return np.asarray(x, dtype=np.int64)

    def phij(self, x):
        return self.phi_j_ids[np.asarray(x, dtype=np.int64)]

    def neck(self, x, level: int):
        if not 0 <= level < self.levels:
            raise UsageError(f"neck level {level} outside [0, {self.levels - 1}]")
        return level * self.mesh.n_vertices + np.asarray(x, dtype=np.int64)

    def vertex_of(self, node) -> np.ndarray:
        """Underlying mesh vertex of each Z node."""
        node = np.asarray(node, dtype=np.int64)
        N = self.mesh.n_vertices
        base = self.levels * N
        rest = np.flatnonzero(~self.good)
        out = node % N
        tail = node >= base
        out[tail] = rest[node[tail] - base]
        return out

    def edges(self):
        A = sparse.triu(self.adjacency, k=1).tocoo()
        return np.stack([A.row, A.col], axis=1), A.data


def _sym(rows, cols, w, size) -> sparse.csr_matrix:
    A = sparse.coo_matrix((w, (rows, cols)), shape=(size, size)).tocsr()
    # duplicate edges keep the cheaper weight
    A.sum_duplicates()
    return A


def _min_union(mats, size) -> sparse.csr_matrix:
    rows, cols, data = [], [], []
    for M in mats:
        M = M.tocoo()
        rows.append(M.row)
        cols.append(M.col)
        data.append(M.data)
    r, c, d = np.concatenate(rows), np.concatenate(cols), np.concatenate(data)
    lo, hi = np.minimum(r, c), np.maximum(r, c)
    key = lo * size + hi
    order = np.lexsort((d, key))
    key, lo, hi, d = key[order], lo[order], hi[order], d[order]
    first = np.ones(len(key), dtype=bool)
    first[1:] = key[1:] != key[:-1]
    lo, hi, d = lo[first], hi[first], d[first]
    return sparse.csr_matrix((d, (lo, hi)), shape=(size, size))


def default_levels(h_j: float, h: float) -> int:
    """``max(2, ceil(h_j / h))`` so vertical and horizontal steps match."""
    return max(2, int(math.ceil(h_j / h)))


def one_ring(mesh: MeshGraph, mask: np.ndarray) -> np.ndarray:
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    out = mask.copy()
    out[b[mask[a]]] = True
    out[a[mask[b]]] = True
    return out


def build_zspace(mesh: MeshGraph, g0: ConformalMetric, gj: ConformalMetric, good,
                 h_j: float, levels: int | None = None, closure: bool = False) -> ZSpaceGraph:
    """Glue the g_0 copy, the neck and the g_j copy along W_j.

    ``good`` is a vertex-id array or boolean mask.  With ``closure`` the
    one-ring of W_j is glued as well.  ``h_j = 0`` collapses the neck to a
    single level shared by both copies.
    """
    if not (h_j >= 0 and math.isfinite(h_j)):
        raise UsageError("neck height h_j must be finite and nonnegative")
    N = mesh.n_vertices
    good = np.asarray(good)
    if good.dtype != bool:
        mask = np.zeros(N, dtype=bool)
        if good.size and (good.min() < 0 or good.max() >= N):
            raise UsageError("good set contains unknown vertex ids")
        mask[good.astype(np.int64)] = True
    else:
        if good.shape != (N,):
            raise UsageError("good-set mask has the wrong length")
        mask = good.copy()
    if closure:
        mask = one_ring(mesh, mask)
    status = "ok"
    if h_j > 0 and not mask.any():
        status = "empty_good_set"
        warnings.warn("good set is empty: the g_j copy is detached from the neck", stacklevel=2)
    if h_j == 0:
        m = 1
    else:
        m = default_levels(h_j, mesh.h) if levels is None else int(levels)
        if m < 2:
            raise UsageError("a neck of positive height needs at least two levels")

    w0 = mesh.edge_weights(g0)
    wj = mesh.edge_weights(gj)
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    rest = np.flatnonzero(~mask)
    phi_j = (m - 1) * N + np.arange(N, dtype=np.int64)
    phi_j[rest] = m * N + np.arange(len(rest))
    size = m * N + len(rest)

    mats = []
    # level 0 is both the g_0 copy and the neck bottom
    mats.append(_sym(a, b, np.minimum(w0, wj), size))
    for lev in range(1, m):
        mats.append(_sym(lev * N + a, lev * N + b, wj, size))
    if m > 1:
        dz = h_j / (m - 1)
        x = np.arange(N)
        for lev in range(m - 1):
            mats.append(_sym(lev * N + x, (lev + 1) * N + x, np.full(N, dz), size))
    # g_j copy edges; on glued pairs they coincide with top-level neck edges
    mats.append(_sym(phi_j[a], phi_j[b], wj, size))
    A = _min_union(mats, size)

    block = np.full(size, BLOCK_NECK, dtype=np.int8)
    block[:N] = BLOCK_M0
    block[m * N:] = BLOCK_MJ
    if m > 1:
        block[(m - 1) * N + np.flatnonzero(mask)] = BLOCK_MJ
    level = np.repeat(np.arange(m), N)
    level = np.concatenate([level, np.full(len(rest), m - 1)])
    return ZSpaceGraph(mesh, float(h_j), m, mask, phi_j, A, block, level, status, closure)


@dataclass(frozen=True)
class ZDistance:
    value: float
    status: str  # "ok" or "disconnected"

    def __float__(self) -> float:
        return self.value


def z_distances_from(z: ZSpaceGraph, sources) -> np.ndarray:
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    if sources.size and (sources.min() < 0 or sources.max() >= z.n_nodes):
        raise UsageError(f"unknown Z node; Z has {z.n_nodes} nodes")
    return csgraph.dijkstra(z.adjacency, directed=False, indices=sources)


def z_distance(z: ZSpaceGraph, a: int, b: int) -> ZDistance:
    """Shortest glued-path length between Z nodes ``a`` and ``b``.

    Unreachable pairs give ``inf`` with status ``"disconnected"``.
    """
    if not (0 <= b < z.n_nodes):
        raise UsageError(f"unknown Z node; Z has {z.n_nodes} nodes")
    key = int(a)
    if key not in z._dist_cache:
        z._dist_cache[key] = z_distances_from(z, [key])[0]
    d = float(z._dist_cache[key][b])
    return ZDistance(d, "ok" if math.isfinite(d) else "disconnected")


def save_zspace(z: ZSpaceGraph, path) -> Path:
    """Write Z in the mesh file layout plus block and level columns."""
    path = Path(path)
    V = z.mesh.vertices[z.vertex_of(np.arange(z.n_nodes))]
    E, W = z.edges()
    doc = {
        "build": {**z.mesh.build_params(), "h_j": z.h_j, "levels": z.levels,
                  "closure": z.closure, "status": z.status},
        "vertices": V.tolist(),
        "boundary": z.mesh.boundary[z.vertex_of(np.arange(z.n_nodes))].astype(int).tolist(),
        "edges": E.tolist(),
        "columns": {"block": z.block.tolist(), "level": z.level.tolist(),
                    "weight": W.tolist()},
    }
    if path.suffix == ".npz":
        np.savez(path, vertices=V, edges=E, weight=W, block=z.block, level=z.level,
                 build=json.dumps(doc["build"]))
    else:
        path.write_text(json.dumps(doc))
    return path
