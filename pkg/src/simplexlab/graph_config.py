"""Distance graphs and their configuration spaces.

A distance graph fixes vertices ``v_0..v_n`` in R^d and an edge set; its
configuration space is the set of ``(x_1..x_n)`` (with ``x_0 = 0``) whose
edge lengths match, ``f_ij(x) = |x_i - x_j|^2 - t_ij = 0``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateError, DisconnectedGraphError, OffVarietyError
from .euclid_config import PolynomialVariety, Simplex, distance_to_affine_hull, in_general_position


@dataclass(frozen=True)
class DistanceGraph:
    vertices: np.ndarray
    edges: tuple

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or len(v) < 2:
            raise ValueError("need at least two vertices in R^d")
        if np.any(v[0] != 0):
            v = v - v[0]
        edges = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j or not (0 <= i < len(v) and 0 <= j < len(v)):
                raise ValueError(f"bad edge {(i, j)}")
            edges.append((min(i, j), max(i, j)))
        edges = tuple(sorted(set(edges)))
        if not edges:
            raise ValueError("graph has no edges")
        dists = np.linalg.norm(v[:, None] - v[None], axis=-1)
        diam = dists.max()
        if diam == 0 or np.any(dists[np.triu_indices(len(v), 1)] <= 1e-12 * diam):
            raise DegenerateError("repeated vertices")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "edges", edges)
        adj = csr_matrix((np.ones(len(edges)), ([e[0] for e in edges], [e[1] for e in edges])), shape=(len(v),) * 2)
        n_comp, _ = connected_components(adj, directed=False)
        if n_comp != 1:
            raise DisconnectedGraphError("distance graph must be connected")

    @classmethod
    def complete(cls, simplex: Simplex) -> "DistanceGraph":
        n = simplex.n_vertices
        return cls(simplex.vertices, tuple((i, j) for i in range(n) for j in range(i + 1, n)))

    @classmethod
    def path(cls, vertices) -> "DistanceGraph":
        n = len(vertices)
        return cls(vertices, tuple((i, i + 1) for i in range(n - 1)))

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n(self) -> int:
        """Number of free vertices (all but ``v_0``)."""
        return self.n_vertices - 1

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    def sq_lengths(self) -> np.ndarray:
        v = self.vertices
        return np.array([np.sum((v[i] - v[j]) ** 2) for i, j in self.edges])

    def neighbors(self, j: int) -> list[int]:
        return sorted({a if b == j else b for a, b in self.edges if j in (a, b)})

    def earlier_neighbors(self, j: int) -> list[int]:
        return [i for i in self.neighbors(j) if i < j]

    def variety(self) -> PolynomialVariety:
        """Configuration space with ``x_0`` as the single anchor."""
        return PolynomialVariety(self.vertices[:1], self.n, self.edges, self.sq_lengths())

    def transformed(self, rotation=None, scale: float = 1.0) -> "DistanceGraph":
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation, float).T
        return DistanceGraph(scale * v, self.edges)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for i, row in enumerate(self.vertices):
                w.writerow(["vertex", i] + [repr(float(c)) for c in row])
            for i, j in self.edges:
                w.writerow(["edge", i, j])

    @classmethod
    def from_csv(cls, path) -> "DistanceGraph":
        verts: dict[int, list[float]] = {}
        edges = []
        with open(Path(path), newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#"):
                    continue
                kind = row[0].strip()
                if kind == "vertex":
                    verts[int(row[1])] = [float(c) for c in row[2:]]
                elif kind == "edge":
                    edges.append((int(row[1]), int(row[2])))
                else:
                    raise ValueError(f"unknown row type {kind!r}")
        if sorted(verts) != list(range(len(verts))):
            raise ValueError("vertex indices must be 0..n")
        return cls(np.array([verts[i] for i in range(len(verts))]), tuple(edges))


@dataclass(frozen=True)
class GraphInvariants:
    degree: int
    proper: bool
    r: float
    d: float
    delta: float


def graph_invariants(graph: DistanceGraph, scope: str = "earlier") -> GraphInvariants:
    """Metric invariants; ``d`` is the longest edge and ``delta = r/d``.

    With ``scope="earlier"`` the neighbor set of ``v_j`` is
    ``V_j = {v_i : i < j, (i, j) in E}`` for ``j >= 1``. With
    ``scope="all"`` every neighbor of every vertex counts; on the complete
    graph of a simplex ``r`` is then the simplex's ``r(V)``. The degree always
    uses the earlier sets.
    """
    if scope not in ("earlier", "all"):
        raise ValueError("scope must be 'earlier' or 'all'")
    v = graph.vertices
    degree = max(len(graph.earlier_neighbors(j)) for j in range(1, graph.n_vertices))
    proper = True
    r = np.inf
    for j in range(1 if scope == "earlier" else 0, graph.n_vertices):
        nb = graph.earlier_neighbors(j) if scope == "earlier" else graph.neighbors(j)
        proper &= in_general_position(np.vstack([v[nb], v[j:j + 1]]))
        r = min(r, distance_to_affine_hull(v[j], v[nb]))
    d = float(np.sqrt(graph.sq_lengths().max()))
    return GraphInvariants(degree, bool(proper), float(r), d, float(r) / d)


def residual(graph: DistanceGraph, x) -> np.ndarray:
    """``f_ij(x)`` per edge for a configuration ``x`` of shape (n, d) or (n*d,)."""
    x = np.asarray(x, float).reshape(-1)
    return graph.variety().residual(x)


def jacobian(graph: DistanceGraph, x) -> np.ndarray:
    return graph.variety().jacobian(np.asarray(x, float).reshape(-1))


@dataclass(frozen=True)
class RankReport:
    nonsingular: bool
    smallest_singular_value: float


def is_nonsingular(graph: DistanceGraph, x, tol: float = 1e-6) -> RankReport:
    """Full row rank of the ``|E| x dn`` gradient matrix at ``x``."""
    x = np.asarray(x, float).reshape(-1)
    res = residual(graph, x)
    if np.max(np.abs(res)) > tol:
        raise OffVarietyError(f"configuration is off the variety (max residual {np.max(np.abs(res)):.2e})")
    G = jacobian(graph, x)
    sv = np.linalg.svd(G, compute_uv=False)
    smallest = float(sv[-1]) if len(sv) == len(graph.edges) else 0.0
    scale = max(np.sqrt(graph.sq_lengths().max()), 1e-300)
    return RankReport(smallest > 1e-8 * scale, smallest)


@dataclass(frozen=True)
class EliminationOrder:
    order: tuple
    back_degree: int


def elimination_order(graph: DistanceGraph) -> EliminationOrder:
    """Ordering (starting at ``v_0``) in which each vertex has few earlier neighbors.

    Repeatedly peels a minimum-degree vertex other than ``v_0`` whose removal
    keeps the rest connected (ties go to the highest index), then reverses.
    """
    remaining = set(range(graph.n_vertices))
    adj = {j: set(graph.neighbors(j)) for j in remaining}
    peeled: list[int] = []

    def connected_without(j):
        rest = remaining - {j}
        start = next(iter(rest))
        seen, stack = {start}, [start]
        while stack:
            u = stack.pop()
            for w in adj[u] & rest:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(rest)

    while len(remaining) > 1:
        cands = sorted((len(adj[j] & remaining), -j) for j in remaining if j != 0 and connected_without(j))
        j = -cands[0][1]
        peeled.append(j)
        remaining.discard(j)
    order = tuple([0] + peeled[::-1])
    pos = {v: i for i, v in enumerate(order)}
    back = max(sum(pos[w] < pos[u] for w in adj[u]) for u in order)
    return EliminationOrder(order, int(back))
