"""Search an atom cloud for approximate similar copies of a simplex or graph.

A seed is an ordered pair of atoms ``(y_0, y_1)``; it fixes
``lambda = |y_1 - y_0| / |v_1 - v_0|``. Later vertices are found among the
atoms near the sphere slice cut out by their already placed neighbors.
The search is budgeted and heuristic; every reported match is re-verified.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ResolutionWarning
from .euclid_config import Simplex, intersect_spheres_batch
from .graph_config import DistanceGraph, elimination_order
from .measure_forge import PointMassMeasure

SEED_CHUNK = 65536


@dataclass(frozen=True)
class MatchResult:
    anchor: np.ndarray
    lam: float
    vertices: np.ndarray
    residual: float
    tolerance: float


def _pattern(shape):
    """Pattern vertices and edges, plus a placement order where each vertex follows a neighbor."""
    if isinstance(shape, Simplex):
        v = shape.vertices - shape.vertices[0]
        n = len(v)
        return v, [(i, j) for i in range(n) for j in range(i + 1, n)], list(range(n))
    if isinstance(shape, DistanceGraph):
        return shape.vertices, list(shape.edges), list(elimination_order(shape).order)
    raise TypeError("shape must be a Simplex or a DistanceGraph")


def match_residual(vertices, pattern_vertices, edges, lam: float) -> float:
    """``max | |y_i - y_j| - lam |v_i - v_j| |`` over the edges."""
    y = np.asarray(vertices, float)
    v = np.asarray(pattern_vertices, float)
    i, j = np.array(edges).T
    got = np.linalg.norm(y[i] - y[j], axis=1)
    want = lam * np.linalg.norm(v[i] - v[j], axis=1)
    return float(np.max(np.abs(got - want)))


def verify_match(match: MatchResult, shape) -> bool:
    v, edges, _ = _pattern(shape)
    return match_residual(match.vertices, v, edges, match.lam) <= match.tolerance


def _extend(tree, atoms, placed, lam, v, order, step, edges_by_vertex, tol):
    """Extend partial matches ``placed (B, n, d)`` (vertex labels in ``order``) by one vertex."""
    j = order[step]
    nbrs = [i for i in edges_by_vertex[j] if i in order[:step]]
    pos = {u: s for s, u in enumerate(order[:step])}
    centers = placed[:, [pos[i] for i in nbrs]]
    target = lam[:, None] * np.linalg.norm(v[nbrs] - v[j], axis=1)[None, :]
    batch = intersect_spheres_batch(centers, target**2)
    p = batch.sphere_dim
    if p == 0:
        # the two points of a 0-sphere lie along the direction missing from the normal basis
        nb = batch.normal_basis
        proj = np.eye(nb.shape[2]) - np.einsum("bmi,bmj->bij", nb, nb)
        col = np.argmax(np.einsum("bij,bij->bj", proj, proj), axis=1)
        basis = proj[np.arange(len(proj)), :, col]
        basis /= np.linalg.norm(basis, axis=1, keepdims=True)
        rho = np.where(batch.valid, batch.radius, 0.0)[:, None]
        queries = np.concatenate([batch.center + rho * basis, batch.center - rho * basis])
        owner = np.concatenate([np.arange(len(placed))] * 2)
        radius = np.full(len(queries), tol)
    else:
        queries, owner = batch.center, np.arange(len(placed))
        radius = np.where(batch.valid, batch.radius, 0.0) + tol
    hits = tree.query_ball_point(queries, radius)
    counts = np.fromiter((len(h) for h in hits), int, len(hits))
    if counts.sum() == 0:
        return placed[:0, :].reshape(0, step + 1, placed.shape[2]), lam[:0]
    src = np.repeat(owner, counts)
    cand = np.concatenate([np.asarray(h, int) for h in hits if len(h)])
    y = atoms[cand]
    err = np.abs(np.linalg.norm(y[:, None, :] - centers[src], axis=2) - target[src])
    ok = np.all(err <= tol, axis=1)
    # distinct from every placed atom
    ok &= np.all(np.linalg.norm(placed[src] - y[:, None, :], axis=2) > 0, axis=1)
    src, cand = src[ok], cand[ok]
    key = np.unique(np.stack([src, cand], axis=1), axis=0)
    src, cand = key[:, 0], key[:, 1]
    return np.concatenate([placed[src], atoms[cand][:, None, :]], axis=1), lam[src]


def find_similar_copy(
    cloud,
    shape,
    lam_range: tuple[float, float],
    tolerance: float,
    budget: int = 100,
    resolution: float | None = None,
) -> list[MatchResult]:
    """Up to ``budget`` copies ``x + lam U(V)`` in the cloud, best residual first.

    ``cloud`` is a :class:`PointMassMeasure` or an (N, d) array. Seed pairs
    are accepted when their length is within ``tolerance`` of the scaled
    first edge, so reported ``lam`` can leave ``lam_range`` by at most
    ``tolerance / |v_1 - v_0|``. A
    :class:`ResolutionWarning` is issued when ``tolerance`` is below twice
    ``resolution`` (default: the cloud's atom spacing).
    """
    atoms = cloud.points if isinstance(cloud, PointMassMeasure) else np.asarray(cloud, float)
    v, edges, order = _pattern(shape)
    lo, hi = lam_range
    if not 0 < lo <= hi:
        raise ValueError("lambda range must satisfy 0 < lo <= hi")
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if atoms.size == 0 or len(atoms) < len(v):
        return []
    atoms = atoms.reshape(len(atoms), -1)
    if atoms.shape[1] != v.shape[1]:
        raise ValueError("cloud and pattern live in different dimensions")
    if resolution is None:
        resolution = PointMassMeasure.uniform(atoms).atom_spacing()
    if tolerance < 2 * resolution:
        warnings.warn(f"tolerance {tolerance:g} is below twice the atom spacing {resolution:g}", ResolutionWarning,
                      stacklevel=2)

    tree = cKDTree(atoms)
    edges_by_vertex = {u: set() for u in range(len(v))}
    for a, b in edges:
        edges_by_vertex[a].add(b)
        edges_by_vertex[b].add(a)
    first = np.linalg.norm(v[order[1]] - v[order[0]])
    found = []
    block = max(1, SEED_CHUNK * 64 // len(atoms))
    for start in range(0, len(atoms), block):
        d2 = np.zeros((min(block, len(atoms) - start), len(atoms)))
        for c in range(atoms.shape[1]):
            d2 += np.subtract.outer(atoms[start:start + block, c], atoms[:, c]) ** 2
        # the seed window widens by the metric tolerance, so lambda may overshoot the range by tol/|v_1 - v_0|
        a, b = np.nonzero((d2 > 0) & (d2 >= max(lo * first - tolerance, 0.0) ** 2) & (d2 <= (hi * first + tolerance) ** 2))
        a = a + start
        lam = np.linalg.norm(atoms[b] - atoms[a], axis=1) / first
        placed = np.stack([atoms[a], atoms[b]], axis=1)
        for step in range(2, len(v)):
            if len(placed) == 0:
                break
            placed, lam = _extend(tree, atoms, placed, lam, v, order, step, edges_by_vertex, tolerance)
        for pts, l in zip(placed, lam):
            y = np.empty_like(pts)
            y[order] = pts
            res = match_residual(y, v, edges, l)
            if res <= tolerance:
                found.append(MatchResult(y[0].copy(), float(l), y, res, tolerance))
    found.sort(key=lambda m: (m.residual, m.lam, tuple(m.vertices.reshape(-1))))
    return found[:budget]


def write_matches_csv(path, matches) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if matches:
            n, d = matches[0].vertices.shape
            w.writerow(["lambda", "residual"] + [f"y{i}_{c}" for i in range(n) for c in range(d)])
        else:
            w.writerow(["lambda", "residual"])
        for m in matches:
            w.writerow([repr(m.lam), repr(m.residual)] + [repr(float(c)) for c in m.vertices.reshape(-1)])
