import itertools

import numpy as np
import pytest

from lognls.graph import LatticeSpec, build_general_graph, build_lattice


def lattice(sides, boundary="torus"):
    sides = tuple(sides)
    return build_lattice(LatticeSpec(len(sides), sides, boundary))


def brute_force_edges(sides, boundary):
    """All coordinate pairs at lattice distance 1, by enumeration of every pair."""
    pts = list(itertools.product(*[range(s) for s in sides]))
    index = {pt: i for i, pt in enumerate(pts)}
    edges = set()
    for a, b in itertools.combinations(pts, 2):
        dist = 0
        for x, y, s in zip(a, b, sides):
            d = abs(x - y)
            if boundary == "torus":
                d = min(d, s - d)
            dist += d
        if dist == 1:
            edges.add((index[a], index[b]))
    return edges


def dense_laplacian(g):
    """(A - D) assembled from the brute-force edge set, independent of g.matrix."""
    n = g.vertex_count
    if g.lattice is not None:
        edges = brute_force_edges(g.lattice.sides, g.lattice.boundary)
        amb = 2 * g.lattice.dimension
        deg = np.full(n, amb)
    else:
        edges = {tuple(e) for e in g.edges.tolist()}
        deg = np.zeros(n, dtype=int)
        for a, b in edges:
            deg[a] += 1
            deg[b] += 1
    A = np.zeros((n, n))
    for a, b in edges:
        A[a, b] = A[b, a] = 1.0
    return A - np.diag(deg)


TOPOLOGIES = {
    "Z1_torus_32": lambda: lattice([32]),
    "torus_4x4": lambda: lattice([4, 4]),
    "dirichlet_3x3": lambda: lattice([3, 3], "dirichlet"),
    "triangle": lambda: build_general_graph([(0, 1), (1, 2), (0, 2)], 3),
}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
