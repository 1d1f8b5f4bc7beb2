"""Communication graphs, Laplacian spectra and block arc matrices.

Every undirected edge ``{i, j}`` (``i < j``) is split into two directed arcs,
``i -> j`` followed by ``j -> i``; edges are visited in lexicographic order so
that all matrices built here are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np


class ConnectivityError(RuntimeError):
    """Raised when rejection sampling cannot produce a connected graph."""


class GammaConvention(str, Enum):
    """Which Laplacian eigenvalue is reported as ``gamma_L``."""

    SECOND_LARGEST = "second_largest"
    SMALLEST_NONZERO = "smallest_nonzero"


@dataclass(frozen=True)
class Graph:
    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("a graph needs at least 2 nodes")
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise ValueError(f"edge ({i}, {j}) out of range")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
        if not is_connected(self.n_nodes, self.edges):
            raise ValueError("graph is not connected")

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "Graph":
        canon = tuple(sorted((min(i, j), max(i, j)) for i, j in edges))
        adj = np.zeros((n_nodes, n_nodes), dtype=bool)
        for i, j in canon:
            adj[i, j] = adj[j, i] = True
        return cls(n_nodes, canon, adj)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]

    def laplacian(self) -> np.ndarray:
        adj = self.adjacency.astype(float)
        return np.diag(adj.sum(axis=1)) - adj

    def relabel(self, perm) -> "Graph":
        """Return the graph with node ``i`` renamed to ``perm[i]``."""
        perm = list(perm)
        return Graph.from_edges(self.n_nodes, [(perm[i], perm[j]) for i, j in self.edges])


def is_connected(n_nodes: int, edges) -> bool:
    """Depth-first search from node 0."""
    nbrs = [[] for _ in range(n_nodes)]
    for i, j in edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in nbrs[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n_nodes


def generate_random_graph(n_nodes: int, edge_prob: float, seed: int,
                          max_rejections: int = 10_000) -> Graph:
    """Sample a connected Erdos-Renyi graph by rejection.

    Attempt ``a`` draws every edge independently with probability `edge_prob`
    from the stream seeded by ``(seed, a)``; the first connected draw is
    returned.
    """
    if n_nodes < 2:
        raise ValueError("n_nodes must be >= 2")
    if not 0.0 < edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in (0, 1]")
    iu, ju = np.triu_indices(n_nodes, k=1)
    for attempt in range(max_rejections):
        rng = np.random.default_rng([seed, attempt])
        keep = rng.random(iu.size) < edge_prob
        edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
        if is_connected(n_nodes, edges):
            return Graph.from_edges(n_nodes, edges)
    raise ConnectivityError(
        f"connectivity unreachable: no connected graph after {max_rejections} draws "
        f"(n={n_nodes}, p={edge_prob})")


@dataclass(frozen=True)
class GraphSpectrum:
    eigenvalues: np.ndarray
    gamma_L: float
    Gamma_L: float
    convention: GammaConvention
    algebraic_connectivity: float


def laplacian_spectrum(g: Graph, convention=GammaConvention.SECOND_LARGEST,
                       tol: float = 1e-10) -> GraphSpectrum:
    conv = GammaConvention(convention)
    eig = np.linalg.eigvalsh(g.laplacian())
    eig = np.sort(eig)
    if abs(eig[0]) > tol:
        raise ValueError(f"smallest Laplacian eigenvalue {eig[0]:.3e} is not zero")
    eig[0] = 0.0
    lam2 = float(eig[1])
    if lam2 <= tol:
        raise ValueError("graph is not connected (repeated zero eigenvalue)")
    if conv is GammaConvention.SECOND_LARGEST:
        # among the n - 1 nonzero eigenvalues; a 2-node graph has only one
        nonzero = eig[1:]
        gamma = float(nonzero[-2] if nonzero.size >= 2 else nonzero[-1])
    else:
        gamma = lam2
    return GraphSpectrum(eig, gamma, float(eig[-1]), conv, lam2)


@dataclass(frozen=True, eq=False)
class ArcMatrices:
    """Block arc matrices for the stacked constraints ``A_s x = z``, ``A_d x = z``.

    ``A = [A_s; A_d]`` and ``B = [-I; -I]`` so that ``A x + B z = 0``.
    """

    graph: Graph
    p: int
    arcs: tuple[tuple[int, int], ...]
    A_s: np.ndarray = field(repr=False)
    A_d: np.ndarray = field(repr=False)

    @property
    def m_arcs(self) -> int:
        return len(self.arcs)

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    @property
    def E_o(self) -> np.ndarray:
        return self.A_s - self.A_d

    @property
    def A(self) -> np.ndarray:
        return np.vstack([self.A_s, self.A_d])

    @property
    def B(self) -> np.ndarray:
        eye = np.eye(self.m_arcs * self.p)
        return -np.vstack([eye, eye])

    @property
    def sources(self) -> np.ndarray:
        return np.array([a[0] for a in self.arcs], dtype=int)

    @property
    def destinations(self) -> np.ndarray:
        return np.array([a[1] for a in self.arcs], dtype=int)

    @property
    def reverse(self) -> np.ndarray:
        """Index of the opposite arc: arcs come in adjacent (i->j, j->i) pairs."""
        return np.arange(self.m_arcs) ^ 1


def arc_list(g: Graph) -> tuple[tuple[int, int], ...]:
    arcs = []
    for i, j in g.edges:
        arcs.append((i, j))
        arcs.append((j, i))
    return tuple(arcs)


def arc_matrices(g: Graph, p: int) -> ArcMatrices:
    if p < 1:
        raise ValueError("p must be >= 1")
    arcs = arc_list(g)
    m = len(arcs)
    sel_s = np.zeros((m, g.n_nodes))
    sel_d = np.zeros((m, g.n_nodes))
    for a, (i, j) in enumerate(arcs):
        sel_s[a, i] = 1.0
        sel_d[a, j] = 1.0
    eye = np.eye(p)
    return ArcMatrices(g, p, arcs, np.kron(sel_s, eye), np.kron(sel_d, eye))


def write_edge_list(g: Graph, path) -> None:
    lines = [f"{g.n_nodes} {g.n_edges}"] + [f"{i} {j}" for i, j in g.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> Graph:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows:
        raise ValueError(f"{path}: empty edge list")
    n, m = int(rows[0][0]), int(rows[0][1])
    edges = [(int(r[0]), int(r[1])) for r in rows[1:]]
    if len(edges) != m:
        raise ValueError(f"{path}: header announces {m} edges, found {len(edges)}")
    return Graph.from_edges(n, edges)
