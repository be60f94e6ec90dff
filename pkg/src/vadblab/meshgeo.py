"""Point-cloud graphs on model manifolds and metric-weighted shortest paths.

A mesh is a jittered lattice (an h-net of the manifold) with every pair of
vertices closer than ``kappa * h`` joined by an edge.  The edge's base
curve is the g_0 segment between its ends; its weight under a conformal
metric is that segment's length.  Graph distances overestimate the
continuum distance and approach it as ``h -> 0`` with ``kappa`` fixed.
"""

from __future__ import annotations

import json
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .errors import ConstructionError, UsageError
from .metric_core import ConformalMetric, ModelManifold, edge_lengths

JITTER = 0.2


@dataclass
class MeshGraph:
    """Vertices, boundary flags and neighbor edges of a manifold mesh.

    Immutable after :func:`build_mesh`; per-metric edge weights are
    computed once under a lock and cached by metric token.
    """

    manifold: ModelManifold
    h: float
    kappa: float
    seed: int
    vertices: np.ndarray
    boundary: np.ndarray
    edges: np.ndarray
    _weights: dict = field(default_factory=dict, repr=False)
    _csr: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def radius(self) -> float:
        return self.kappa * self.h

    def check_metric(self, metric: ConformalMetric):
        if metric.base != self.manifold:
            raise UsageError(
                f"metric lives on {metric.base.kind}, mesh on {self.manifold.kind}"
            )

    def edge_weights(self, metric: ConformalMetric) -> np.ndarray:
        self.check_metric(metric)
        # weights of k*g are sqrt(k) times those of g: cache the unit-scale shape
        shape = replace(metric, scale=1.0, label="", convention="", below_constant=None)
        key = shape.token
        with self._lock:
            if key not in self._weights:
                a, b = self.edges[:, 0], self.edges[:, 1]
                w, _, _ = edge_lengths(shape, self.vertices[a], self.vertices[b],
                                       check_domain=False)
                self._weights[key] = w
            w = self._weights[key]
        return w if metric.scale == 1.0 else w * math.sqrt(metric.scale)

    def adjacency(self, metric: ConformalMetric) -> sparse.csr_matrix:
        w = self.edge_weights(metric)
        key = metric.token
        with self._lock:
            if key not in self._csr:
                N = self.n_vertices
                a, b = self.edges[:, 0], self.edges[:, 1]
                self._csr[key] = sparse.csr_matrix((w, (a, b)), shape=(N, N))
            return self._csr[key]

    def vertex_factor(self, metric: ConformalMetric) -> np.ndarray:
        return metric.factor(self.vertices)

    def boundary_distance(self) -> np.ndarray:
        return self.manifold.boundary_distance(self.vertices)

    def nearest_vertex(self, X) -> np.ndarray:
        X = self.manifold.as_points(X)
        _, idx = self._tree.query(self.manifold.canonical(X))
        return np.asarray(idx)

    @property
    def _tree(self) -> cKDTree:
        tree = self.__dict__.get("_kdtree")
        if tree is None:
            box = self.manifold.sides if self.manifold.kind == "torus" else None
            tree = cKDTree(self.vertices, boxsize=box)
            self.__dict__["_kdtree"] = tree
        return tree

    def neighbors_within(self, X, radius: float | None = None) -> list[np.ndarray]:
        radius = self.radius if radius is None else radius
        X = self.manifold.canonical(self.manifold.as_points(X))
        r = _query_radius(self.manifold, radius)
        return [np.asarray(ix, dtype=int) for ix in self._tree.query_ball_point(X, r)]

    def build_params(self) -> dict:
        return {"manifold": self.manifold.to_dict(), "h": self.h, "kappa": self.kappa,
                "seed": self.seed}


def _query_radius(manifold: ModelManifold, rho: float) -> float:
    # the sphere tree lives in R^(n+1): convert geodesic radius to chord
    if manifold.kind == "sphere":
        return 2.0 * math.sin(min(rho, math.pi) / 2.0) * (1 + 1e-12)
    return rho


# ---------------------------------------------------------------------------
# vertex generation


def _lattice(dim: int, spacing: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Triangular (dim 2) or cubic lattice covering the box [lo, hi]."""
    if dim == 2:
        dy = spacing * math.sqrt(3) / 2
        ys = np.arange(lo[1] - dy, hi[1] + dy, dy)
        pts = []
        for k, y in enumerate(ys):
            xs = np.arange(lo[0] - spacing, hi[0] + spacing, spacing) + (k % 2) * spacing / 2
            pts.append(np.stack([xs, np.full_like(xs, y)], axis=1))
        return np.concatenate(pts)
    axes = [np.arange(l - spacing, u + spacing, spacing) for l, u in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)


def _fibonacci_sphere(count: int, radius: float = 1.0) -> np.ndarray:
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    t = math.pi * (1 + math.sqrt(5)) * i
    s = np.sqrt(1 - z * z)
    return radius * np.stack([s * np.cos(t), s * np.sin(t), z], axis=1)


def _boundary_sphere(dim: int, radius: float, h: float) -> np.ndarray:
    if dim == 2:
        m = max(8, int(math.ceil(2 * math.pi * radius / (0.8 * h))))
        t = 2 * math.pi * np.arange(m) / m
        return radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    if dim == 3:
        m = max(12, int(math.ceil(4 * math.pi * radius**2 / (0.55 * h * h))))
        return _fibonacci_sphere(m, radius)
    raise UsageError("meshes are supported for n in {2, 3}")


def _sphere_vertices(n: int, h: float, rng: np.random.Generator) -> np.ndarray:
    if n == 2:
        m = max(12, int(math.ceil(4 * math.pi / (0.9 * h * h))))
        P = _fibonacci_sphere(m)
        P = P + rng.uniform(-0.1 * h, 0.1 * h, P.shape)
        return P / np.linalg.norm(P, axis=1, keepdims=True)
    # cube-sphere: grids on the 2(n+1) faces of the cube, projected radially
    a = h
    k = int(math.ceil(2.0 / a))
    g = np.linspace(-1, 1, k + 1)
    face = np.stack(np.meshgrid(*([g] * n), indexing="ij"), axis=-1).reshape(-1, n)
    pts = []
    for axis in range(n + 1):
        for sign in (-1.0, 1.0):
            P = np.insert(face, axis, sign, axis=1)
            pts.append(P)
    P = np.unique(np.round(np.concatenate(pts), 12), axis=0)
    P = P / np.linalg.norm(P, axis=1, keepdims=True)
    P = P + rng.uniform(-0.05 * h, 0.05 * h, P.shape)
    return P / np.linalg.norm(P, axis=1, keepdims=True)


def _torus_vertices(base: ModelManifold, h: float, rng: np.random.Generator) -> np.ndarray:
    n = base.dim
    L = base.sides
    if n == 2:
        mx = int(math.ceil(L[0] / h))
        my = int(math.ceil(L[1] / (h * math.sqrt(3) / 2)))
        my += my % 2  # row offset must close up periodically
        ax, ay = L[0] / mx, L[1] / my
        I, K = np.meshgrid(np.arange(mx), np.arange(my), indexing="ij")
        P = np.stack([(I + 0.5 * (K % 2)) * ax, K * ay], axis=-1).reshape(-1, 2)
        P = P + rng.uniform(-JITTER, JITTER, P.shape) * min(ax, ay)
    else:
        m = [int(math.ceil(Li / (0.9 * h))) for Li in L]
        axes = [np.arange(mi) * Li / mi for mi, Li in zip(m, L)]
        P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        P = P + rng.uniform(-0.1, 0.1, P.shape) * 0.9 * h
    return np.mod(P, L)


def _solid_vertices(base: ModelManifold, h: float, rng: np.random.Generator):
    n = base.dim
    r_out = base.params[-1]
    spacing = h if n == 2 else h / 1.1
    amp = JITTER if n == 2 else 0.1
    lo = np.full(n, -r_out)
    P = _lattice(n, spacing, lo, -lo)
    P = P + rng.uniform(-amp, amp, P.shape) * spacing
    depth = r_out - np.linalg.norm(P, axis=1)
    if base.kind == "annulus":
        depth = np.minimum(depth, np.linalg.norm(P, axis=1) - base.params[0])
    interior = P[depth >= 0.5 * h]
    bnd = [_boundary_sphere(n, r, h) for r, _ in base.boundary_components()]
    B = np.concatenate(bnd)
    V = np.concatenate([B, interior])
    flags = np.zeros(len(V), dtype=bool)
    flags[: len(B)] = True
    return V, flags


def _segment_clears_hole(A, B, r_in) -> np.ndarray:
    D = B - A
    t = np.clip(-np.sum(A * D, axis=1) / np.maximum(np.sum(D * D, axis=1), 1e-300), 0, 1)
    closest = A + t[:, None] * D
    return np.linalg.norm(closest, axis=1) >= r_in * (1 - 1e-12)


def build_mesh(manifold: ModelManifold, h: float, kappa: float = 3.0, seed: int = 0) -> MeshGraph:
    """Jittered-lattice h-net with edges between vertices closer than ``kappa*h``.

    Disk and annulus boundaries are sampled exactly (to rounding) on their
    spheres.  Deterministic given ``(manifold, h, kappa, seed)``.
    """
    if not h > 0:
        raise ConstructionError("mesh spacing h must be positive")
    if kappa < 2:
        raise ConstructionError("stencil multiplier kappa must be >= 2")
    if manifold.dim not in (2, 3):
        raise UsageError("meshes are supported for n in {2, 3}")
    rng = np.random.default_rng(seed)
    if manifold.kind in ("disk", "annulus"):
        V, flags = _solid_vertices(manifold, h, rng)
    elif manifold.kind == "sphere":
        V = _sphere_vertices(manifold.dim, h, rng)
        flags = np.zeros(len(V), dtype=bool)
    else:
        V = _torus_vertices(manifold, h, rng)
        flags = np.zeros(len(V), dtype=bool)
    if manifold.kind == "torus" and kappa * h >= 0.5 * float(np.min(manifold.sides)):
        raise ConstructionError("neighbor radius must be below half the torus side")

    box = manifold.sides if manifold.kind == "torus" else None
    tree = cKDTree(V, boxsize=box)
    pairs = tree.query_pairs(_query_radius(manifold, kappa * h), output_type="ndarray")
    if manifold.kind == "annulus" and len(pairs):
        pairs = pairs[_segment_clears_hole(V[pairs[:, 0]], V[pairs[:, 1]], manifold.params[0])]
    if len(pairs) == 0:
        raise ConstructionError("mesh has no edges; h is too large")
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    N = len(V)
    adj = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(N, N))
    ncomp, _ = csgraph.connected_components(adj, directed=False)
    if ncomp != 1:
        raise ConstructionError(f"mesh graph has {ncomp} components; decrease h or raise kappa")
    mesh = MeshGraph(manifold, float(h), float(kappa), int(seed), V, flags, pairs.astype(np.int64))
    mesh.__dict__["_kdtree"] = tree
    return mesh


# ---------------------------------------------------------------------------
# distances


@dataclass(frozen=True)
class DistanceField:
    source: int
    values: np.ndarray
    metric_token: str


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("VADB_THREADS", "1")))
    except ValueError:
        return 1


def distances_from(mesh: MeshGraph, metric: ConformalMetric, sources, workers: int | None = None) -> np.ndarray:
    """Shortest-path distances from each source to every vertex, shape (k, N).

    Sources are split into contiguous chunks across worker threads; the
    output order never depends on scheduling.
    """
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    _check_vertices(mesh, sources)
    G = mesh.adjacency(metric)
    workers = _workers() if workers is None else workers
    if workers <= 1 or len(sources) < 2 * workers:
        return csgraph.dijkstra(G, directed=False, indices=sources)
    chunks = np.array_split(sources, workers)
    with ThreadPoolExecutor(workers) as ex:
        parts = list(ex.map(lambda s: csgraph.dijkstra(G, directed=False, indices=s), chunks))
    return np.concatenate(parts, axis=0)


def _check_vertices(mesh: MeshGraph, ids):
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= mesh.n_vertices or
                     not np.issubdtype(ids.dtype, np.integer)):
        raise UsageError(f"unknown vertex id; mesh has {mesh.n_vertices} vertices")


def distance_field(mesh: MeshGraph, metric: ConformalMetric, source: int) -> DistanceField:
    d = distances_from(mesh, metric, [source])[0]
    return DistanceField(int(source), d, metric.token)


def geodesic_distance(mesh: MeshGraph, metric: ConformalMetric, p: int, q: int) -> float:
    """Graph distance between vertices ``p`` and ``q`` under ``metric``."""
    _check_vertices(mesh, np.array([p, q]))
    return float(distances_from(mesh, metric, [p])[0, q])


def point_distances(mesh: MeshGraph, metric: ConformalMetric, X) -> np.ndarray:
    """Pairwise graph distances between arbitrary points.

    Each point is inserted as a temporary vertex joined to the mesh
    vertices within the neighbor radius.  Returns a (k, k) matrix.
    """
    X = mesh.manifold.check_points(X)
    k = len(X)
    N = mesh.n_vertices
    nbrs = mesh.neighbors_within(X)
    rows, cols, ws = [], [], []
    for i, ix in enumerate(nbrs):
        if len(ix) == 0:
            raise UsageError("point has no mesh neighbor within the stencil radius")
        w, _, _ = edge_lengths(metric, np.repeat(X[i:i + 1], len(ix), axis=0),
                               mesh.vertices[ix], check_domain=False)
        rows.append(np.full(len(ix), N + i))
        cols.append(ix)
        ws.append(np.maximum(w, 1e-300))
    G = mesh.adjacency(metric)
    extra = sparse.csr_matrix((np.concatenate(ws), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(N + k, N + k))
    big = sparse.bmat([[G, None], [None, sparse.csr_matrix((k, k))]], format="csr") + extra
    D = csgraph.dijkstra(big, directed=False, indices=np.arange(N, N + k))
    return D[:, N:]


def point_distance(mesh: MeshGraph, metric: ConformalMetric, x, y) -> float:
    return float(point_distances(mesh, metric, np.stack([np.asarray(x, float),
                                                          np.asarray(y, float)]))[0, 1])


@dataclass(frozen=True)
class DiameterEstimate:
    lower: float
    upper: float
    landmarks: np.ndarray = field(compare=False)


def diameter_estimate(mesh: MeshGraph, metric: ConformalMetric, landmarks: int = 32,
                      seed: int = 0) -> DiameterEstimate:
    """Farthest-point landmark diameter bound.

    ``lower`` is the largest distance seen from any landmark (a true lower
    bound for the graph diameter); ``upper`` adds the heuristic
    ``2 h kappa`` correction.
    """
    if landmarks < 2:
        raise UsageError("need at least two landmarks")
    rng = np.random.default_rng(seed)
    current = int(rng.integers(mesh.n_vertices))
    chosen = []
    mind = np.full(mesh.n_vertices, np.inf)
    best = 0.0
    for _ in range(min(landmarks, mesh.n_vertices)):
        chosen.append(current)
        d = distances_from(mesh, metric, [current], workers=1)[0]
        best = max(best, float(d.max()))
        mind = np.minimum(mind, d)
        current = int(np.argmax(mind))
        if mind[current] == 0.0:
            break
    return DiameterEstimate(best, best + 2 * mesh.h * mesh.kappa, np.asarray(chosen))


# ---------------------------------------------------------------------------
# export / import


def mesh_to_dict(mesh: MeshGraph, extra_columns: dict | None = None) -> dict:
    d = {
        "build": mesh.build_params(),
        "vertices": mesh.vertices.tolist(),
        "boundary": mesh.boundary.astype(int).tolist(),
        "edges": mesh.edges.tolist(),
    }
    if extra_columns:
        d["columns"] = {k: np.asarray(v).tolist() for k, v in extra_columns.items()}
    return d


def save_mesh(mesh: MeshGraph, path, extra_columns: dict | None = None) -> Path:
    """Write a mesh as JSON (``.json``) or a flat numpy archive (``.npz``)."""
    path = Path(path)
    if path.suffix == ".npz":
        cols = {f"col_{k}": np.asarray(v) for k, v in (extra_columns or {}).items()}
        np.savez(path, vertices=mesh.vertices, boundary=mesh.boundary, edges=mesh.edges,
                 build=json.dumps(mesh.build_params()), **cols)
    else:
        path.write_text(json.dumps(mesh_to_dict(mesh, extra_columns)))
    return path


def load_mesh(path) -> MeshGraph:
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as z:
            build = json.loads(str(z["build"]))
            V, B, E = z["vertices"], z["boundary"].astype(bool), z["edges"]
    else:
        d = json.loads(path.read_text())
        build = d["build"]
        V = np.asarray(d["vertices"], dtype=float)
        B = np.asarray(d["boundary"], dtype=bool)
        E = np.asarray(d["edges"], dtype=np.int64)
    return MeshGraph(ModelManifold.from_dict(build["manifold"]), build["h"], build["kappa"],
                     build["seed"], V, B, E.reshape(-1, 2))
