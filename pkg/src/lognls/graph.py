"""Finite graph topologies and discrete differential operators.

Lattice truncations of Z^N come in two flavours. ``torus`` identifies opposite
faces, ``dirichlet`` keeps a box and treats every exterior vertex as carrying
the value 0. In Dirichlet mode the Laplacian diagonal keeps the full lattice
degree 2N, so the operator is the restriction of the infinite-lattice one.

Unit edge weights and the counting measure are used throughout.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse


class GraphError(ValueError):
    """Raised when a topology cannot be built or an operator gets bad input."""


@dataclass(frozen=True)
class LatticeSpec:
    dimension: int
    sides: tuple[int, ...]
    boundary: str = "torus"

    def __post_init__(self):
        object.__setattr__(self, "sides", tuple(int(s) for s in self.sides))
        if self.dimension < 1:
            raise GraphError(f"dimension must be positive, got {self.dimension}")
        if len(self.sides) != self.dimension:
            raise GraphError(
                f"expected {self.dimension} side lengths, got {len(self.sides)}"
            )
        if self.boundary not in ("torus", "dirichlet"):
            raise GraphError(f"unknown boundary mode {self.boundary!r}")
        minimum = 3 if self.boundary == "torus" else 1
        for axis, side in enumerate(self.sides):
            if side < minimum:
                raise GraphError(
                    f"axis {axis}: side length {side} < {minimum} "
                    f"not allowed in {self.boundary} mode"
                )


@dataclass(frozen=True, eq=False)
class GraphTopology:
    """Immutable vertex/edge structure.

    ``adjacency[x]`` holds the sorted in-graph neighbours of ``x``.
    ``ambient_degree[x]`` counts all lattice neighbours, including exterior
    ones in Dirichlet mode; for other kinds it equals the stored degree.
    """

    vertex_count: int
    adjacency: tuple[tuple[int, ...], ...]
    ambient_degree: np.ndarray
    kind: str
    lattice: Optional[LatticeSpec] = None
    edges: np.ndarray = field(repr=False, default=None)
    matrix: sparse.csr_matrix = field(repr=False, default=None)

    @property
    def degree(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.adjacency], dtype=int)

    @property
    def exterior_degree(self) -> np.ndarray:
        """Number of neighbours outside the box (zero except in Dirichlet mode)."""
        return self.ambient_degree - self.degree

    @property
    def max_degree(self) -> int:
        if self.vertex_count == 0:
            return 0
        return int(self.ambient_degree.max())

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    # -- lattice coordinates (row-major) ---------------------------------
    def coordinates(self, index=None) -> np.ndarray:
        if self.lattice is None:
            raise GraphError("coordinates are only defined for lattice graphs")
        idx = np.arange(self.vertex_count) if index is None else index
        return np.stack(np.unravel_index(idx, self.lattice.sides), axis=-1)

    def index_of(self, coords: Sequence[int]) -> int:
        if self.lattice is None:
            raise GraphError("coordinates are only defined for lattice graphs")
        coords = tuple(int(c) for c in coords)
        if len(coords) != self.lattice.dimension:
            raise GraphError(f"expected {self.lattice.dimension} coordinates")
        return int(np.ravel_multi_index(coords, self.lattice.sides))

    def translation(self, axis: int, shift: int) -> np.ndarray:
        """Index permutation ``perm`` with ``perm[x] = x + shift*e_axis`` on a torus."""
        if self.kind != "lattice_torus":
            raise GraphError("translations are only defined on lattice tori")
        coords = self.coordinates()
        coords[:, axis] = (coords[:, axis] + shift) % self.lattice.sides[axis]
        return np.ravel_multi_index(tuple(coords.T), self.lattice.sides)

    def distances_from(self, source: int) -> np.ndarray:
        """Unweighted BFS distance from ``source`` to every vertex."""
        dist = np.full(self.vertex_count, -1, dtype=int)
        dist[source] = 0
        queue = deque([source])
        while queue:
            x = queue.popleft()
            for y in self.adjacency[x]:
                if dist[y] < 0:
                    dist[y] = dist[x] + 1
                    queue.append(y)
        return dist

    def boundary_vertices(self) -> np.ndarray:
        """Vertices with at least one exterior neighbour (Dirichlet boxes only)."""
        return np.flatnonzero(self.exterior_degree > 0)


def _finalize(n, edge_pairs, ambient, kind, lattice=None) -> GraphTopology:
    edges = np.asarray(sorted(edge_pairs), dtype=int).reshape(-1, 2)
    neighbours = [[] for _ in range(n)]
    for a, b in edges:
        neighbours[a].append(b)
        neighbours[b].append(a)
    adjacency = tuple(tuple(sorted(int(y) for y in nb)) for nb in neighbours)
    data = np.ones(2 * len(edges))
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    matrix = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    matrix.sort_indices()
    if ambient is None:
        ambient = np.array([len(nb) for nb in adjacency], dtype=int)
    g = GraphTopology(
        vertex_count=n,
        adjacency=adjacency,
        ambient_degree=np.asarray(ambient, dtype=int),
        kind=kind,
        lattice=lattice,
        edges=edges,
        matrix=matrix,
    )
    g.ambient_degree.setflags(write=False)
    g.edges.setflags(write=False)
    if n > 0 and (g.distances_from(0) < 0).any():
        raise GraphError("graph is not connected")
    return g


def build_lattice(spec: LatticeSpec) -> GraphTopology:
    """Finite truncation of Z^N with row-major vertex indexing."""
    sides = spec.sides
    n = int(np.prod(sides))
    coords = np.stack(np.unravel_index(np.arange(n), sides), axis=-1)
    pairs = set()
    for axis, side in enumerate(sides):
        nxt = coords.copy()
        nxt[:, axis] += 1
        if spec.boundary == "torus":
            nxt[:, axis] %= side
            keep = np.ones(n, dtype=bool)
        else:
            keep = nxt[:, axis] < side
        src = np.arange(n)[keep]
        dst = np.ravel_multi_index(tuple(nxt[keep].T), sides)
        for a, b in zip(src, dst):
            pairs.add((min(a, b), max(a, b)))
    kind = "lattice_torus" if spec.boundary == "torus" else "lattice_dirichlet"
    ambient = np.full(n, 2 * spec.dimension, dtype=int)
    return _finalize(n, pairs, ambient, kind, lattice=spec)


def build_general_graph(edge_list, vertex_count: int) -> GraphTopology:
    """Simple undirected graph from an edge list; must be connected."""
    if vertex_count < 1:
        raise GraphError("vertex_count must be positive")
    pairs = set()
    for a, b in edge_list:
        a, b = int(a), int(b)
        if not (0 <= a < vertex_count and 0 <= b < vertex_count):
            raise GraphError(f"edge ({a}, {b}) has an index out of range")
        if a == b:
            raise GraphError(f"self-loop at vertex {a}")
        key = (min(a, b), max(a, b))
        if key in pairs:
            raise GraphError(f"duplicate edge {key}")
        pairs.add(key)
    return _finalize(vertex_count, pairs, None, "general")


# -- fields ---------------------------------------------------------------

def as_field(g: GraphTopology, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (g.vertex_count,):
        raise GraphError(
            f"field has shape {u.shape}, graph has {g.vertex_count} vertices"
        )
    if not np.all(np.isfinite(u)):
        raise GraphError("field contains NaN or infinite entries")
    return u


def signed_power(u: np.ndarray, q: float) -> np.ndarray:
    """|u|^q sign(u), with 0 mapped to 0 for every q."""
    a = np.abs(u)
    out = np.zeros_like(a)
    nz = a > 0
    out[nz] = np.sign(u[nz]) * a[nz] ** q
    return out


# -- operators ------------------------------------------------------------

def _neighbour_differences(g: GraphTopology, u: np.ndarray):
    m = g.matrix
    rows = np.repeat(np.arange(g.vertex_count), np.diff(m.indptr))
    return rows, u[m.indices] - u[rows]


def apply_laplacian(g: GraphTopology, u) -> np.ndarray:
    """Delta u(x) = sum_{y~x} (u(y) - u(x)); exterior neighbours carry u = 0."""
    u = as_field(g, u)
    rows, diff = _neighbour_differences(g, u)
    out = np.bincount(rows, weights=diff, minlength=g.vertex_count)
    return out - g.exterior_degree * u


def apply_p_laplacian(g: GraphTopology, u, p: float) -> np.ndarray:
    """Graph p-Laplacian sum_{y~x} |u(y)-u(x)|^{p-2} (u(y)-u(x)).

    Exterior neighbours of a Dirichlet box contribute with u(y) = 0.
    """
    if not p > 1:
        raise GraphError(f"p-Laplacian needs p > 1, got {p}")
    u = as_field(g, u)
    rows, diff = _neighbour_differences(g, u)
    out = np.bincount(rows, weights=signed_power(diff, p - 1), minlength=g.vertex_count)
    return out + g.exterior_degree * signed_power(-u, p - 1)


def gradient_form(g: GraphTopology, u, v) -> np.ndarray:
    """Pointwise Gamma(u, v)(x) = 1/2 sum_{y~x} (u(y)-u(x)) (v(y)-v(x)).

    On a Dirichlet box each exterior vertex's half-share of a boundary edge is
    credited to the interior endpoint, so summing over the box equals the
    full-lattice integral for fields vanishing outside the box.
    """
    u = as_field(g, u)
    v = as_field(g, v)
    a, b = g.edges[:, 0], g.edges[:, 1]
    prod = 0.5 * (u[b] - u[a]) * (v[b] - v[a])
    out = np.zeros(g.vertex_count)
    np.add.at(out, a, prod)
    np.add.at(out, b, prod)
    return out + g.exterior_degree * u * v


def gradient_p_density(g: GraphTopology, u, p: float = 2.0) -> np.ndarray:
    """|grad u|_p^p (x) = 1/2 sum_{y~x} |u(y)-u(x)|^p, Dirichlet-corrected as above."""
    u = as_field(g, u)
    a, b = g.edges[:, 0], g.edges[:, 1]
    half = 0.5 * np.abs(u[b] - u[a]) ** p
    out = np.zeros(g.vertex_count)
    np.add.at(out, a, half)
    np.add.at(out, b, half)
    return out + g.exterior_degree * np.abs(u) ** p


def norm(g: GraphTopology, u, kind: str = "lp", p: float = 2.0) -> float:
    """Norms on fields.

    kind
        ``lp`` (p >= 1), ``sup``, ``sobolev`` (W^{1,p}, H^1 at p=2, p > 1) or
        ``dirichlet_energy`` (sum of |grad u|_p^p, p > 1).
    """
    u = as_field(g, u)
    if kind == "sup":
        return float(np.max(np.abs(u))) if len(u) else 0.0
    if kind == "lp":
        if not p >= 1:
            raise GraphError(f"lp norm needs p >= 1, got {p}")
        return float(np.sum(np.abs(u) ** p) ** (1.0 / p))
    if kind in ("sobolev", "dirichlet_energy"):
        if not p > 1:
            raise GraphError(f"{kind} needs p > 1, got {p}")
        energy = float(np.sum(gradient_p_density(g, u, p)))
        if kind == "dirichlet_energy":
            return energy
        return (energy + float(np.sum(np.abs(u) ** p))) ** (1.0 / p)
    raise GraphError(f"unknown norm kind {kind!r}")
