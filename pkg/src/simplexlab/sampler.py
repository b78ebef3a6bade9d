"""Sampling the chained configuration measures.

A chain fixes ``x_0 = 0`` and draws the remaining vertices one at a time,
each uniformly on the sphere intersection cut out by its already placed
neighbors. For simplices every vertex sees all previous ones and the weight
is 1 (normalized surface measures). For distance graphs the weight is
``prod_j c(T_j) phi_j(x_j)`` and ``area`` records the product of the slice
areas actually sampled, so ``mean(g * weight * area)`` estimates
``int g phi d(omega_F)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import betainc

from .errors import InadmissiblePartitionError
from .euclid_config import (
    Simplex,
    gram_weight_batch,
    in_general_position,
    intersect_spheres_batch,
    sphere_area,
)
from .graph_config import DistanceGraph, elimination_order, is_nonsingular
from .rng import DEFAULT_CHUNK, Moments, chunk_sizes, map_ordered, substream


@dataclass(frozen=True)
class ChainBatch:
    """``points[:, j]`` is the sample of vertex ``j``; ``order`` is the draw order."""

    points: np.ndarray
    weight: np.ndarray
    area: np.ndarray
    order: tuple

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def scaled_weight(self) -> np.ndarray:
        return self.weight * self.area

    def to_csv(self, path, start_id: int = 0) -> None:
        n, V, d = self.points.shape
        header = ",".join(["sample_id"] + [f"x{j}_{a + 1}" for j in range(V) for a in range(d)] + ["weight"])
        table = np.column_stack([np.arange(start_id, start_id + n), self.points.reshape(n, -1), self.weight])
        fmt = ["%d"] + ["%.17g"] * (V * d + 1)
        np.savetxt(path, table, fmt=fmt, delimiter=",", header=header, comments="")


def bump_cutoff(dist, eta: float) -> np.ndarray:
    """``e * exp(-1 / (1 - (dist/eta)^2))``: equals 1 at 0 and vanishes at ``eta``."""
    if not math.isfinite(eta):
        return np.ones_like(np.asarray(dist, float))
    t2 = (np.asarray(dist, float) / eta) ** 2
    out = np.zeros_like(t2)
    inside = t2 < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t2[inside]))
    return out


def cap_fraction(p: int, theta) -> np.ndarray:
    """Fraction of the p-sphere within angle ``theta`` of a pole (p >= 1)."""
    theta = np.asarray(theta, float)
    half = 0.5 * betainc(p / 2, 0.5, np.sin(np.minimum(theta, np.pi / 2)) ** 2)
    return np.where(theta <= np.pi / 2, half, 1.0 - 0.5 * betainc(p / 2, 0.5, np.sin(theta) ** 2))


def _polar_angles(p: int, theta_max: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Angle from the pole, uniform surface measure restricted to the cap."""
    n = theta_max.shape[0]
    if p == 1:
        return theta_max * rng.uniform(-1.0, 1.0, n)
    if p == 2:
        return np.arccos(1 - rng.uniform(size=n) * (1 - np.cos(theta_max)))
    out = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        th = theta_max[todo] * rng.uniform(size=todo.size) ** (1.0 / p)
        with np.errstate(invalid="ignore", divide="ignore"):
            acc_p = np.where(th > 0, (np.sin(th) / th) ** (p - 1), 1.0)
        keep = rng.uniform(size=todo.size) < acc_p
        out[todo[keep]] = th[keep]
        todo = todo[~keep]
    return out


def _tangent_gaussian(rng, normal, extra=None):
    """Gaussian vectors with the rows of ``normal`` (and ``extra``) projected out."""
    n, _, d = normal.shape
    z = rng.standard_normal((n, d))
    if normal.shape[1]:
        z = z - np.einsum("bk,bkd->bd", np.einsum("bd,bkd->bk", z, normal), normal)
    if extra is not None:
        z = z - np.sum(z * extra, axis=1, keepdims=True) * extra
    return z


def _sample_step(centers, sq, target, eta, rng):
    """Draw one vertex on the slices; return the points with their per-step weight factors."""
    n, m, d = centers.shape
    sl = intersect_spheres_batch(centers, sq)
    p = d - m
    ok = sl.valid.copy()
    c, rho, nb = sl.center, sl.radius, sl.normal_basis
    full_area = sphere_area(p, rho)
    if not math.isfinite(eta):
        u = _tangent_gaussian(rng, nb)
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        x = c + rho[:, None] * u
        area = full_area
    else:
        w = target - c
        off = np.einsum("bk,bkd->bd", np.einsum("bd,bkd->bk", w, nb), nb) if m > 1 else np.zeros_like(w)
        q = w - off
        qn = np.linalg.norm(q, axis=1)
        o2 = np.sum(off**2, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos_max = (o2 + rho**2 + qn**2 - eta**2) / (2 * rho * qn)
        cos_max = np.where(qn > 0, cos_max, np.where(o2 + rho**2 < eta**2, -np.inf, np.inf))
        qhat = np.where(qn[:, None] > 0, q / np.where(qn > 0, qn, 1.0)[:, None], 0.0)
        if p == 0:
            u = _tangent_gaussian(rng, nb)
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            a_in = np.sum(u * qhat, axis=1) > cos_max
            b_in = np.sum(-u * qhat, axis=1) > cos_max
            u = np.where((~a_in & b_in)[:, None], -u, u)
            area = a_in.astype(float) + b_in.astype(float)
        else:
            theta_max = np.arccos(np.clip(cos_max, -1.0, 1.0))
            empty = cos_max >= 1
            # a degenerate pole only happens when the cap is all or nothing
            missing = qn == 0
            if missing.any():
                alt = _tangent_gaussian(rng, nb[missing])
                qhat[missing] = alt / np.linalg.norm(alt, axis=1, keepdims=True)
            theta = _polar_angles(p, theta_max, rng)
            perp = _tangent_gaussian(rng, nb, qhat)
            perp /= np.linalg.norm(perp, axis=1, keepdims=True)
            u = np.cos(theta)[:, None] * qhat + np.sin(theta)[:, None] * perp
            area = np.where(empty, 0.0, full_area * cap_fraction(p, theta_max))
        x = c + rho[:, None] * u
        ok &= area > 0
    _, cT = gram_weight_batch(x, centers)
    phi = bump_cutoff(np.linalg.norm(x - target, axis=1), eta)
    x = np.where(ok[:, None], x, target)
    return x, np.where(ok, cT, 0.0), np.where(ok, phi, 0.0), np.where(ok, area, 0.0)


def _run_steps(vertices, steps, eta, rng, size, gram: bool):
    V, d = vertices.shape
    X = np.zeros((size, V, d))
    X[:, 0] = vertices[0]
    weight = np.ones(size)
    area = np.ones(size)
    for j, nbrs in steps:
        target = np.broadcast_to(vertices[j], (size, d))
        if not nbrs:
            if not math.isfinite(eta):
                raise ValueError(f"vertex {j} has no placed neighbor; a finite cutoff width is required")
            g = rng.standard_normal((size, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            rad = eta * rng.uniform(size=size) ** (1.0 / d)
            x = target + rad[:, None] * g
            X[:, j] = x
            weight *= bump_cutoff(rad, eta)
            area *= math.pi ** (d / 2) / math.gamma(d / 2 + 1) * eta**d
            continue
        nbrs = list(nbrs)
        centers = X[:, nbrs]
        sq = np.broadcast_to(np.sum((vertices[nbrs] - vertices[j]) ** 2, axis=1), (size, len(nbrs)))
        x, cT, phi, a = _sample_step(centers, np.ascontiguousarray(sq), target, eta, rng)
        X[:, j] = x
        weight *= (cT if gram else (cT > 0)) * phi
        area *= a
    return X, weight, area


def simplex_steps(n_vertices: int):
    return [(j, list(range(j))) for j in range(1, n_vertices)]


def graph_steps(graph: DistanceGraph, order: Sequence[int]):
    order = list(order)
    if sorted(order) != list(range(graph.n_vertices)) or order[0] != 0:
        raise ValueError("order must be a permutation of the vertices starting at 0")
    pos = {v: i for i, v in enumerate(order)}
    return [(j, [i for i in graph.neighbors(j) if pos[i] < pos[j]]) for j in order[1:]]


def sample_simplex_chain(simplex: Simplex, rng: np.random.Generator, size: int = 1) -> ChainBatch:
    """Chains with ``x_1`` uniform on ``|y| = |v_1 - v_0|`` and each later vertex
    uniform on the intersection of spheres about all earlier ones."""
    v = simplex.normalized().vertices
    X, w, a = _run_steps(v, simplex_steps(len(v)), math.inf, rng, size, gram=False)
    return ChainBatch(X, w, a, tuple(range(len(v))))


def sample_graph_config(
    graph: DistanceGraph,
    order: Sequence[int] | None,
    eta: float,
    rng: np.random.Generator,
    size: int = 1,
) -> ChainBatch:
    """Importance samples of ``phi * omega_F`` on the configuration space.

    With finite ``eta`` each vertex is drawn uniformly from the part of its
    slice inside ``B(v_j, eta)`` (outside it the cutoff vanishes); the area
    of that part goes into ``area``.
    """
    if not eta > 0:
        raise ValueError("cutoff width must be positive")
    order = elimination_order(graph).order if order is None else tuple(order)
    X, w, a = _run_steps(graph.vertices, graph_steps(graph, order), eta, rng, size, gram=True)
    return ChainBatch(X, w, a, tuple(order))


# --------------------------------------------------------------------------
# checks


@dataclass(frozen=True)
class Comparison:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def z(self) -> float:
        se = math.hypot(self.lhs_se, self.rhs_se)
        diff = self.lhs - self.rhs
        if se == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / se


def _mc_mean(sample_fn, n: int, seed: int, tag: str, threads, chunk=DEFAULT_CHUNK) -> Moments:
    sizes = chunk_sizes(n, chunk)

    def work(i):
        return Moments.of(sample_fn(substream(seed, tag, i), sizes[i]))

    return Moments.combine(map_ordered(work, len(sizes), threads))


def check_partition(graph: DistanceGraph, vertex: int) -> None:
    """Gradient test for splitting ``x`` into ``y = x_vertex`` and the rest."""
    if not 1 <= vertex < graph.n_vertices:
        raise InadmissiblePartitionError("the split vertex must be one of x_1..x_n")
    v = graph.vertices
    nbrs = graph.neighbors(vertex)
    if len(nbrs) > graph.ambient_dim or not in_general_position(np.vstack([v[nbrs], v[vertex:vertex + 1]])):
        raise InadmissiblePartitionError("gradients in the split vertex are dependent")
    rest = [e for e in graph.edges if vertex not in e]
    if rest:
        keep = [u for u in range(graph.n_vertices) if u != vertex]
        jac = graph.variety().jacobian(v[1:].reshape(-1))
        rows = [i for i, e in enumerate(graph.edges) if vertex not in e]
        cols = [c for u in keep[1:] for c in range((u - 1) * graph.ambient_dim, u * graph.ambient_dim)]
        sv = np.linalg.svd(jac[np.ix_(rows, cols)], compute_uv=False)
        if len(sv) < len(rows) or sv[-1] <= 1e-8 * math.sqrt(graph.sq_lengths().max()):
            raise InadmissiblePartitionError("remaining constraints are singular at the reference configuration")


def fubini_check(
    graph: DistanceGraph,
    vertex: int,
    g: Callable[[np.ndarray], np.ndarray],
    n_samples: int,
    eta: float = math.inf,
    inner: int = 4,
    seed: int = 0,
    threads: int | None = None,
) -> Comparison:
    """Joint chain versus nested integration with ``vertex`` innermost.

    ``lhs`` samples the whole configuration along the elimination order.
    ``rhs`` samples the graph without ``vertex`` first and then averages
    ``inner`` draws of ``x_vertex`` on the slice of all its neighbors.
    """
    check_partition(graph, vertex)
    order = elimination_order(graph).order

    def joint(rng, size):
        b = sample_graph_config(graph, order, eta, rng, size)
        return g(b.points) * b.scaled_weight()

    outer_order = [u for u in order if u != vertex]
    pos = {u: i for i, u in enumerate(outer_order)}
    steps = [(u, [i for i in graph.neighbors(u) if i != vertex and pos[i] < pos[u]]) for u in outer_order[1:]]
    nbrs = graph.neighbors(vertex)
    sq_inner = np.sum((graph.vertices[nbrs] - graph.vertices[vertex]) ** 2, axis=1)

    def nested(rng, size):
        X, w, a = _run_steps(graph.vertices, steps, eta, rng, size, gram=True)
        target = np.broadcast_to(graph.vertices[vertex], (size, graph.ambient_dim))
        sq = np.ascontiguousarray(np.broadcast_to(sq_inner, (size, len(nbrs))))
        acc = np.zeros(size)
        for _ in range(inner):
            x, cT, phi, ar = _sample_step(X[:, nbrs], sq, target, eta, rng)
            X[:, vertex] = x
            acc += g(X) * cT * phi * ar
        return w * a * acc / inner

    lhs = _mc_mean(joint, n_samples, seed, "fubini-joint", threads)
    rhs = _mc_mean(nested, max(n_samples // inner, 2), seed, "fubini-nested", threads)
    return Comparison(float(lhs.mean[0]), float(lhs.std_error[0]), float(rhs.mean[0]), float(rhs.std_error[0]))


@dataclass(frozen=True)
class RotationReport:
    comparisons: tuple

    @property
    def max_abs_z(self) -> float:
        return max(abs(c.z) for c in self.comparisons)


def rotation_invariance_check(
    simplex: Simplex,
    rotation,
    statistics: Sequence[Callable[[np.ndarray], np.ndarray]],
    n_samples: int,
    seed: int = 0,
    threads: int | None = None,
) -> RotationReport:
    """Means of ``stat(x)`` and ``stat(U x)`` on independent chain streams."""
    U = np.asarray(rotation, float)
    if not np.allclose(U @ U.T, np.eye(len(U)), atol=1e-10) or np.linalg.det(U) < 0:
        raise ValueError("rotation must be orthogonal with determinant +1")
    out = []
    for i, stat in enumerate(statistics):
        def plain(rng, size, stat=stat):
            return stat(sample_simplex_chain(simplex, rng, size).points)

        def turned(rng, size, stat=stat):
            return stat(sample_simplex_chain(simplex, rng, size).points @ U.T)

        a = _mc_mean(plain, n_samples, seed, f"rotation-plain-{i}", threads)
        b = _mc_mean(turned, n_samples, seed, f"rotation-turned-{i}", threads)
        out.append(Comparison(float(a.mean[0]), float(a.std_error[0]), float(b.mean[0]), float(b.std_error[0])))
    return RotationReport(tuple(out))
