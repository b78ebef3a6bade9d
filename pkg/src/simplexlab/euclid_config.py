"""Simplex geometry on sphere intersections, with Gram weights for chart measures.

For a family of sphere constraints ``f_i(x) = |x - x_i|^2 - t_i`` the chart
measure ``omega_F`` is defined through local coordinates: split the variables
into ``x_I`` (free) and ``x_J`` (solved for), and integrate
``g(Psi(x_I)) / |det(df/dx_J)|`` over ``x_I``. On a sphere intersection this
measure equals ``c_T`` times surface measure with
``c_T = 2^-m det(T)^-1/2`` and ``T_ij = (x - x_i).(x - x_j)``.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ChartBoundaryError,
    DegenerateError,
    EmptyIntersectionError,
    NewtonError,
    OffVarietyError,
    SingularGramError,
)

GRAM_DET_FLOOR = 1e-14
TANGENCY_TOL = 1e-10
NEWTON_MAX_ITER = 50


def sphere_area(p: int, radius=1.0):
    """Surface area of a p-sphere of the given radius (p = 0 gives 2)."""
    return 2 * math.pi ** ((p + 1) / 2) / math.gamma((p + 1) / 2) * np.asarray(radius, float) ** p


def _rank_tol(diam: float) -> float:
    return 1e-8 * max(diam, 1e-300)


def affine_rank(points) -> int:
    """Rank of the edge vectors ``p_i - p_0`` with a diameter-relative cutoff."""
    pts = np.asarray(points, float)
    if len(pts) < 2:
        return 0
    edges = pts[1:] - pts[0]
    diam = max(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1)), 1e-300)
    sv = np.linalg.svd(edges, compute_uv=False)
    return int(np.sum(sv > _rank_tol(diam)))


def in_general_position(points) -> bool:
    pts = np.asarray(points, float)
    return affine_rank(pts) == len(pts) - 1


def distance_to_affine_hull(point, others) -> float:
    """Distance from ``point`` to the affine hull of the rows of ``others``."""
    point = np.asarray(point, float)
    others = np.atleast_2d(np.asarray(others, float))
    base = others[0]
    diff = point - base
    if len(others) == 1:
        return float(np.linalg.norm(diff))
    basis = (others[1:] - base).T
    coef, *_ = np.linalg.lstsq(basis, diff, rcond=None)
    return float(np.linalg.norm(diff - basis @ coef))


# --------------------------------------------------------------------------
# simplices


@dataclass(frozen=True)
class Simplex:
    """Vertices ``v_0..v_{n-1}`` in general position."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or len(v) < 2:
            raise DegenerateError("a simplex needs at least two vertices")
        if len(v) > v.shape[1] + 1:
            raise DegenerateError("too many vertices for the ambient dimension")
        diam = np.max(np.linalg.norm(v[:, None] - v[None], axis=-1))
        if diam == 0:
            raise DegenerateError("vertices coincide")
        edges = (v[1:] - v[0]) / diam
        if np.linalg.det(edges @ edges.T) <= 1e-12:
            raise DegenerateError("vertices are not affinely independent")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    def normalized(self) -> "Simplex":
        """Translate so that ``v_0 = 0``."""
        return Simplex(self.vertices - self.vertices[0])

    def squared_distances(self) -> np.ndarray:
        v = self.vertices
        return np.sum((v[:, None] - v[None]) ** 2, axis=-1)

    def diameter(self) -> float:
        return float(np.sqrt(self.squared_distances().max()))

    def transformed(self, rotation=None, scale: float = 1.0, shift=None) -> "Simplex":
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation, float).T
        v = scale * v
        if shift is not None:
            v = v + np.asarray(shift, float)
        return Simplex(v)

    @classmethod
    def regular(cls, n_vertices: int, side: float = 1.0, ambient_dim: int | None = None) -> "Simplex":
        """Regular simplex with the given side length, first vertex at 0."""
        k = n_vertices - 1
        ambient_dim = k if ambient_dim is None else ambient_dim
        # standard basis vectors of R^n_vertices, projected to their hyperplane
        e = np.eye(n_vertices) / math.sqrt(2)
        centred = e - e.mean(axis=0)
        _, _, vt = np.linalg.svd(centred)
        coords = centred @ vt[:k].T
        coords = coords - coords[0]
        out = np.zeros((n_vertices, ambient_dim))
        out[:, :k] = coords * side
        return cls(out)

    @classmethod
    def equilateral_triangle(cls, side: float = 1.0, ambient_dim: int = 2) -> "Simplex":
        v = np.zeros((3, ambient_dim))
        v[1, 0] = side
        v[2, 0] = side / 2
        v[2, 1] = side * math.sqrt(3) / 2
        return cls(v)


@dataclass(frozen=True)
class SimplexInvariants:
    vertex_heights: np.ndarray
    r: float
    d: float
    delta: float


def simplex_invariants(simplex: Simplex) -> SimplexInvariants:
    """Vertex heights ``r_j`` with ``r(V) = min r_j`` and thickness ``delta = r(V) / d(V)``."""
    v = simplex.vertices
    heights = np.array([distance_to_affine_hull(v[j], np.delete(v, j, axis=0)) for j in range(len(v))])
    r = float(heights.min())
    d = simplex.diameter()
    return SimplexInvariants(heights, r, d, r / d)


# --------------------------------------------------------------------------
# sphere intersections


@dataclass(frozen=True)
class SphereSlice:
    """The sphere ``{x : x - center in plane, |x - center| = radius}``.

    ``normal_basis`` (rows) spans the directions of the affine hull of the
    sphere centers; the sphere lives in its orthogonal complement.
    """

    center: np.ndarray
    radius: float
    normal_basis: np.ndarray
    sphere_dim: int

    @property
    def ambient_dim(self) -> int:
        return self.center.shape[0]

    @property
    def plane_basis(self) -> np.ndarray:
        """Orthonormal rows spanning the complement of the normal space."""
        d = self.ambient_dim
        if self.normal_basis.shape[0] == 0:
            return np.eye(d)
        q, _ = np.linalg.qr(self.normal_basis.T, mode="complete")
        return q[:, self.normal_basis.shape[0]:].T

    def area(self) -> float:
        return float(sphere_area(self.sphere_dim, self.radius))

    def contains(self, x, tol: float = 1e-10) -> bool:
        x = np.asarray(x, float) - self.center
        off = self.normal_basis @ x if self.normal_basis.size else np.zeros(0)
        scale = max(self.radius, 1.0)
        return bool(np.all(np.abs(off) <= tol * scale) and abs(np.linalg.norm(x) - self.radius) <= tol * scale)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform points on the slice (Gaussian projection)."""
        z = rng.standard_normal((size, self.ambient_dim))
        if self.normal_basis.size:
            z = z - (z @ self.normal_basis.T) @ self.normal_basis
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return self.center + self.radius * z


def _slice_linear_system(centers, sq_radii):
    """Center offset from ``x_1`` via ``y.a_i = (t_1 - t_i + |a_i|^2) / 2``."""
    a = centers[..., 1:, :] - centers[..., :1, :]
    b = 0.5 * (sq_radii[..., :1] - sq_radii[..., 1:] + np.sum(a**2, axis=-1))
    return a, b


def intersect_spheres(centers, sq_radii) -> SphereSlice:
    """Intersection of the spheres ``|x - x_i|^2 = t_i``."""
    centers = np.atleast_2d(np.asarray(centers, float))
    t = np.atleast_1d(np.asarray(sq_radii, float))
    m, d = centers.shape
    if t.shape != (m,):
        raise ValueError("one squared radius per center is required")
    if m > d:
        raise DegenerateError("more spheres than ambient dimensions")
    if np.any(t <= 0):
        raise ValueError("squared radii must be positive")
    if m == 1:
        return SphereSlice(centers[0].copy(), float(math.sqrt(t[0])), np.zeros((0, d)), d - 1)
    if not in_general_position(centers):
        raise DegenerateError("sphere centers are not affinely independent")
    a, b = _slice_linear_system(centers, t)
    gram = a @ a.T
    coef = np.linalg.solve(gram, b)
    offset = coef @ a
    rho2 = t[0] - offset @ offset
    scale = max(t.max(), 1.0)
    if rho2 <= 0:
        raise EmptyIntersectionError(f"spheres do not meet (squared radius {rho2:.3g})")
    if rho2 < TANGENCY_TOL * scale:
        warnings.warn("spheres are nearly tangent", RuntimeWarning, stacklevel=2)
    q, _ = np.linalg.qr(a.T)
    return SphereSlice(centers[0] + offset, float(math.sqrt(rho2)), q.T.copy(), d - m)


@dataclass(frozen=True)
class SliceBatch:
    """Vectorized sphere intersections; ``valid`` flags nonempty slices."""

    center: np.ndarray
    radius: np.ndarray
    normal_basis: np.ndarray
    valid: np.ndarray

    @property
    def sphere_dim(self) -> int:
        return self.center.shape[-1] - self.normal_basis.shape[-2] - 1


def intersect_spheres_batch(centers, sq_radii) -> SliceBatch:
    """``intersect_spheres`` for stacks ``centers (B, m, d)``, ``sq_radii (B, m)``."""
    centers = np.asarray(centers, float)
    t = np.asarray(sq_radii, float)
    n, m, d = centers.shape
    if m == 1:
        return SliceBatch(centers[:, 0].copy(), np.sqrt(t[:, 0]), np.zeros((n, 0, d)), np.ones(n, bool))
    a, b = _slice_linear_system(centers, t)
    gram = a @ np.swapaxes(a, 1, 2)
    # affinely dependent centers give no slice; solve a dummy system there
    size = np.trace(gram, axis1=1, axis2=2) / (m - 1)
    flat = np.abs(np.linalg.det(gram)) <= 1e-12 * np.maximum(size, 1e-300) ** (m - 1)
    gram[flat] = np.eye(m - 1)
    coef = np.linalg.solve(gram, b[..., None])[..., 0]
    offset = np.einsum("bi,bid->bd", coef, a)
    rho2 = t[:, 0] - np.sum(offset**2, axis=1)
    q, _ = np.linalg.qr(np.swapaxes(a, 1, 2))
    valid = (rho2 > 0) & ~flat
    return SliceBatch(centers[:, 0] + offset, np.sqrt(np.maximum(rho2, 0.0)), np.swapaxes(q, 1, 2), valid)


def sample_on_slices(batch: SliceBatch, rng: np.random.Generator) -> np.ndarray:
    """One uniform point per slice of the batch."""
    n, d = batch.center.shape
    z = rng.standard_normal((n, d))
    nb = batch.normal_basis
    if nb.shape[1]:
        z = z - np.einsum("bk,bkd->bd", np.einsum("bd,bkd->bk", z, nb), nb)
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return batch.center + batch.radius[:, None] * z


# --------------------------------------------------------------------------
# Gram data


@dataclass(frozen=True)
class GramData:
    matrix: np.ndarray
    determinant: float
    weight: float
    volume: float


def gram_matrix(x, centers) -> np.ndarray:
    x = np.asarray(x, float)
    diff = x[..., None, :] - np.asarray(centers, float)
    return diff @ np.swapaxes(diff, -1, -2)


def gram_weight(x, centers, sq_radii=None) -> GramData:
    """``c_T = 2^-m det(T)^-1/2`` together with the Gram matrix ``T`` it comes from."""
    centers = np.atleast_2d(np.asarray(centers, float))
    x = np.asarray(x, float)
    if sq_radii is not None:
        res = np.sum((x - centers) ** 2, axis=1) - np.asarray(sq_radii, float)
        if np.max(np.abs(res)) > 1e-9:
            raise OffVarietyError("point does not satisfy the sphere constraints")
    T = gram_matrix(x, centers)
    det = float(np.linalg.det(T))
    if det <= GRAM_DET_FLOOR:
        raise SingularGramError("Gram matrix is singular: x lies in the span of the centers")
    m = centers.shape[0]
    return GramData(T, det, 2.0**-m / math.sqrt(det), math.sqrt(det))


def gram_weight_batch(x, centers):
    """``(det T, c_T)`` for stacks ``x (B, d)`` and ``centers (B, m, d)``; singular -> weight 0."""
    T = gram_matrix(x, centers)
    det = np.linalg.det(T)
    m = np.asarray(centers).shape[-2]
    safe = det > GRAM_DET_FLOOR
    weight = np.where(safe, 2.0**-m / np.sqrt(np.where(safe, det, 1.0)), 0.0)
    return det, weight


def parallelotope_volume(vectors) -> float:
    """Volume spanned by the rows, by modified Gram-Schmidt."""
    vs = np.atleast_2d(np.asarray(vectors, float)).copy()
    basis: list[np.ndarray] = []
    vol = 1.0
    for v in vs:
        for b in basis:
            v = v - (v @ b) * b
        norm = float(np.linalg.norm(v))
        vol *= norm
        if norm == 0:
            return 0.0
        basis.append(v / norm)
    return vol


# --------------------------------------------------------------------------
# chart measure


@dataclass(frozen=True)
class PolynomialVariety:
    """Zero set of ``|p_a - p_b|^2 - t`` over anchored and free points.

    Points ``0..A-1`` are the fixed ``anchors``; points ``A..A+n_free-1`` are
    free, and their coordinates form the variable vector (length ``d*n_free``).
    """

    anchors: np.ndarray
    n_free: int
    edges: tuple
    sq_lengths: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        anchors = np.atleast_2d(np.asarray(self.anchors, float))
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "dim", anchors.shape[1])
        object.__setattr__(self, "sq_lengths", np.asarray(self.sq_lengths, float))
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        n_points = anchors.shape[0] + self.n_free
        for a, b in self.edges:
            if not (0 <= a < n_points and 0 <= b < n_points) or a == b:
                raise ValueError(f"bad edge {(a, b)}")
            if a < anchors.shape[0] and b < anchors.shape[0]:
                raise ValueError("edges between two anchors carry no constraint")
        if len(self.sq_lengths) != len(self.edges):
            raise ValueError("one squared length per edge is required")
        if self.n_vars < self.n_eq:
            raise ValueError("more constraints than variables")

    @classmethod
    def from_spheres(cls, centers, sq_radii) -> "PolynomialVariety":
        centers = np.atleast_2d(np.asarray(centers, float))
        m = centers.shape[0]
        return cls(centers, 1, tuple((i, m) for i in range(m)), np.asarray(sq_radii, float))

    @property
    def n_vars(self) -> int:
        return self.dim * self.n_free

    @property
    def n_eq(self) -> int:
        return len(self.edges)

    @property
    def chart_dim(self) -> int:
        return self.n_vars - self.n_eq

    @property
    def is_sphere_family(self) -> bool:
        A = self.anchors.shape[0]
        return self.n_free == 1 and all(a < A for a, _ in self.edges)

    def points(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        free = X.reshape(X.shape[:-1] + (self.n_free, self.dim))
        anchors = np.broadcast_to(self.anchors, X.shape[:-1] + self.anchors.shape)
        return np.concatenate([anchors, free], axis=-2)

    def residual(self, X) -> np.ndarray:
        P = self.points(X)
        a = np.array([e[0] for e in self.edges])
        b = np.array([e[1] for e in self.edges])
        return np.sum((P[..., a, :] - P[..., b, :]) ** 2, axis=-1) - self.sq_lengths

    def jacobian(self, X) -> np.ndarray:
        P = self.points(X)
        A = self.anchors.shape[0]
        jac = np.zeros(np.shape(X)[:-1] + (self.n_eq, self.n_vars))
        for i, (a, b) in enumerate(self.edges):
            diff = 2 * (P[..., a, :] - P[..., b, :])
            if a >= A:
                jac[..., i, (a - A) * self.dim:(a - A + 1) * self.dim] += diff
            if b >= A:
                jac[..., i, (b - A) * self.dim:(b - A + 1) * self.dim] -= diff
        return jac

    def scale(self) -> float:
        return float(max(np.max(self.sq_lengths), 1.0))


def pick_coordinates(jac: np.ndarray) -> tuple[int, ...]:
    """Greedy column choice maximizing the smallest singular value."""
    n_eq, n_vars = jac.shape
    chosen: list[int] = []
    for _ in range(n_eq):
        best, best_val = -1, -1.0
        for c in range(n_vars):
            if c in chosen:
                continue
            sv = np.linalg.svd(jac[:, chosen + [c]], compute_uv=False)
            if sv[-1] > best_val + 1e-15:
                best, best_val = c, sv[-1]
        chosen.append(best)
    return tuple(sorted(chosen))


def chart_ratio(jac: np.ndarray, J) -> np.ndarray:
    """``|det G_J| / sqrt(det G G^T)``; the squares sum to 1 over all J."""
    J = list(J)
    num = np.abs(np.linalg.det(jac[..., :, J]))
    den = np.sqrt(np.linalg.det(jac @ np.swapaxes(jac, -1, -2)))
    return num / den


def project_to_variety(variety: PolynomialVariety, X, iters: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Newton projection ``X <- X - G^+ F``; returns points and a converged mask."""
    X = np.atleast_2d(np.array(X, float))
    tol = 1e-12 * variety.scale()
    for _ in range(iters):
        F = variety.residual(X)
        G = variety.jacobian(X)
        X = X - np.einsum("bij,bj->bi", np.linalg.pinv(G), F)
    ok = np.max(np.abs(variety.residual(X)), axis=-1) <= tol
    return X, ok




@dataclass(frozen=True)
class ChartIntegral:
    value: float
    error: float
    coordinates: tuple
    n_nodes: int


def _newton(variety, X0, J, tol):
    """Solve for the ``J`` coordinates with the others held fixed."""
    X = X0.copy()
    J = np.asarray(J)
    for _ in range(NEWTON_MAX_ITER):
        F = variety.residual(X)
        active = (np.max(np.abs(F), axis=1) > tol) & np.all(np.isfinite(X), axis=1)
        if not active.any():
            break
        G = variety.jacobian(X[active])[:, :, J]
        good = np.abs(np.linalg.det(G)) > 1e-300
        step = np.full((G.shape[0], len(J)), np.nan)
        if good.any():
            step[good] = np.linalg.solve(G[good], F[active][good][..., None])[..., 0]
        idx = np.flatnonzero(active)
        X[idx[:, None], J[None, :]] -= step
    F = variety.residual(X)
    return X, (np.max(np.abs(F), axis=1) <= tol) & np.all(np.isfinite(X), axis=1)


def _continuation(variety, J, axes, to_chart, start, seed_X, sheet_sign, integrand, ratio_floor):
    """Solve the chart on a tensor grid by breadth-first Newton continuation.

    ``to_chart`` maps grid parameters to ``x_I`` plus a change-of-variables
    factor. Returns the integrand times that factor per node and a status
    array (1 accepted, 2 rejected).
    """
    D = variety.n_vars
    I = [c for c in range(D) if c not in J]
    p = len(I)
    shape = tuple(len(a) for a in axes)
    n_nodes = int(np.prod(shape)) if p else 1
    tol = 1e-12 * variety.scale()

    def params(flat):
        if not p:
            return np.zeros((len(flat), 0))
        idx = np.unravel_index(flat, shape)
        return np.stack([axes[a][idx[a]] for a in range(p)], axis=1)

    state = np.zeros(n_nodes, np.int8)
    values = np.zeros(n_nodes)
    sol = np.zeros((n_nodes, D))

    def solve(nodes, guesses):
        xi, factor = to_chart(params(nodes))
        X0 = guesses.copy()
        X0[:, I] = xi
        X, conv = _newton(variety, X0, J, tol)
        jac = variety.jacobian(X)
        det = np.linalg.det(jac[:, :, list(J)])
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = chart_ratio(jac, J)
        good = conv & (np.sign(det) == sheet_sign) & (ratio >= ratio_floor)
        state[nodes] = np.where(good, 1, 2)
        if good.any():
            sol[nodes[good]] = X[good]
            values[nodes[good]] = factor[good] * integrand(X[good], np.abs(det[good]))
        return nodes[good], conv

    start = np.array([np.ravel_multi_index(tuple(start), shape) if p else 0])
    frontier, conv = solve(start, seed_X[None])
    if not conv[0]:
        raise NewtonError(f"Newton did not converge within {NEWTON_MAX_ITER} iterations at the seed")
    if frontier.size == 0:
        raise ChartBoundaryError("the seed lies outside the admissible part of the chart")
    strides = np.array([int(np.prod(shape[a + 1:])) for a in range(p)], dtype=np.int64)
    while frontier.size and p:
        idx = np.array(np.unravel_index(frontier, shape)).T
        cand, parent = [], []
        for a in range(p):
            for step in (-1, 1):
                nb = idx[:, a] + step
                ok = (nb >= 0) & (nb < shape[a])
                cand.append(frontier[ok] + step * strides[a])
                parent.append(frontier[ok])
        cand = np.concatenate(cand)
        parent = np.concatenate(parent)
        fresh = state[cand] == 0
        cand, first = np.unique(cand[fresh], return_index=True)
        if cand.size == 0:
            break
        frontier, _ = solve(cand, sol[parent[fresh][first]])
    return values.reshape(shape), state.reshape(shape)


def _tensor_sum(values, weights):
    out = values
    for w in weights:
        out = np.tensordot(out, w, axes=([0], [0]))
    return float(out)


def _check_support(values, state):
    """Nonzero integrand must not touch rejected nodes or the grid edge."""
    p = values.ndim
    live = values != 0
    for a in range(p):
        edge = np.take(live, [0, -1], axis=a)
        if edge.any():
            raise ChartBoundaryError("integrand does not vanish on the box boundary")
        for step in (-1, 1):
            shifted = np.roll(state == 2, step, axis=a)
            if np.any(live & shifted):
                raise ChartBoundaryError("integrand support reaches the chart boundary")


def _box_integral(variety, g, J, lo, hi, seed, level, ratio_floor):
    n = 2**level + 1
    p = variety.chart_dim
    I = [c for c in range(variety.n_vars) if c not in J]
    h = (hi - lo) / (n - 1)
    axes = [lo[a] + h[a] * np.arange(n) for a in range(p)]
    start = np.clip(np.round((seed[I] - lo) / h).astype(int), 0, n - 1)
    sign = np.sign(np.linalg.det(variety.jacobian(seed)[:, list(J)]))

    def to_chart(t):
        return t, np.ones(len(t))

    def integrand(X, absdet):
        return np.asarray(g(X), float) / absdet

    values, state = _continuation(variety, J, axes, to_chart, start, seed, sign, integrand, ratio_floor)
    _check_support(values, state)
    fine = [np.r_[h[a] / 2, np.full(n - 2, h[a]), h[a] / 2] for a in range(p)]
    coarse = [np.where(np.arange(n) % 2 == 0, 2 * h[a], 0.0) for a in range(p)]
    for w in coarse:
        w[0] = w[-1] = w[0] / 2
    f = _tensor_sum(values, fine)
    c = _tensor_sum(values, coarse)
    return ChartIntegral(f, abs(f - c), tuple(J), int(np.sum(state == 1)))


def _slice_chart(sl: SphereSlice, I):
    """Right singular vectors of the plane basis restricted to ``I``."""
    B = sl.plane_basis.T  # d x (p+1)
    BI = B[I]
    if BI.shape[0] == 0:
        return B, np.eye(1), np.ones(0)
    _, sv, vt = np.linalg.svd(BI)
    return B, vt.T, sv


def chart_quality(variety: PolynomialVariety, J) -> float:
    """Smallest singular value of the slice's projection onto ``x_I``."""
    sl = intersect_spheres(variety.anchors, variety.sq_lengths)
    I = [c for c in range(variety.n_vars) if c not in J]
    _, _, sv = _slice_chart(sl, I)
    return float(sv.min()) if sv.size else 1.0


def admissible_charts(variety: PolynomialVariety, floor: float = 1e-3) -> list[tuple[int, ...]]:
    """Coordinate sets for a sphere intersection, best first."""
    charts = list(itertools.combinations(range(variety.n_vars), variety.n_eq))
    quality = [chart_quality(variety, J) for J in charts]
    order = np.argsort(quality, kind="stable")[::-1]
    return [charts[i] for i in order if quality[i] >= floor]


def _sheet_integral(variety, g, J, n_nodes, ratio_floor):
    sl = intersect_spheres(variety.anchors, variety.sq_lengths)
    D = variety.n_vars
    I = [c for c in range(D) if c not in J]
    p = len(I)
    B, V, sv = _slice_chart(sl, I)
    if sv.size and sv.min() < ratio_floor:
        raise ChartBoundaryError("coordinate set is not admissible on this slice")
    nu = V[:, p]
    M = B[I] @ V[:, :p]
    detM = abs(np.linalg.det(M)) if p else 1.0
    rho = sl.radius
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    theta = 0.5 * np.pi * nodes
    wts = 0.5 * np.pi * weights
    axes = [theta] * p

    def to_chart(t):
        # hemispherical angles -> unit ball, with Jacobian prod cos^(p-k+1)
        u = np.empty_like(t)
        run = np.ones(len(t))
        factor = np.ones(len(t))
        for k in range(p):
            u[:, k] = run * np.sin(t[:, k])
            factor *= np.cos(t[:, k]) ** (p - k)
            run = run * np.cos(t[:, k])
        return sl.center[I] + rho * u @ M.T, factor * rho**p * detM

    def integrand(X, absdet):
        return np.asarray(g(X), float) / absdet

    total = 0.0
    used = 0
    mid = np.full(p, n_nodes // 2)
    for pole in (nu, -nu):
        seed = sl.center + rho * (B @ pole)
        sign = np.sign(np.linalg.det(variety.jacobian(seed)[:, list(J)]))
        values, state = _continuation(variety, J, axes, to_chart, mid, seed, sign, integrand, 0.0)
        if np.any(state != 1):
            raise ChartBoundaryError("continuation lost the sheet before covering the chart")
        total += _tensor_sum(values, [wts] * p)
        used += int(np.sum(state == 1))
    return total, used


def chart_integrate(
    variety: PolynomialVariety,
    g: Callable[[np.ndarray], np.ndarray],
    *,
    coordinates: Sequence[int] | None = None,
    box=None,
    seed=None,
    level: int = 5,
    ratio_floor: float = 1e-3,
) -> ChartIntegral:
    """Integrate ``g`` against the chart measure ``omega_F``.

    Box mode (``box`` = lower and upper corners in the free coordinates
    ``x_I``, plus a ``seed`` on the variety): trapezoid rule with
    ``2^level + 1`` nodes per axis, ``g`` must vanish before the box edge
    and before the chart degenerates. ``coordinates`` gives the solved set
    ``J``; by default it is picked greedily at the seed. The error estimate
    compares against every other node.

    Whole-slice mode (no box; sphere intersections only): one chart covers
    the slice up to a null set with its two sheets. Each sheet is the graph
    over an ellipsoid in ``x_I``, parametrized by hemispherical angles so
    the ``1/|j|`` edge singularity cancels, and integrated by Gauss-Legendre
    with ``2^level`` nodes per axis. The error estimate reruns with half as
    many nodes. ``J`` defaults to the best-conditioned chart.
    """
    if box is not None:
        if seed is None:
            raise ValueError("box integration needs a seed point on the variety")
        seed = np.asarray(seed, float)
        if np.max(np.abs(variety.residual(seed))) > 1e-9 * variety.scale():
            raise OffVarietyError("seed is not on the variety")
        jac = variety.jacobian(seed)
        J = tuple(sorted(coordinates)) if coordinates is not None else pick_coordinates(jac)
        if len(J) != variety.n_eq:
            raise ValueError("need one solved coordinate per constraint")
        if chart_ratio(jac, J) < ratio_floor:
            raise ChartBoundaryError("coordinate set is not admissible at the seed")
        lo, hi = (np.asarray(b, float) for b in box)
        return _box_integral(variety, g, J, lo, hi, seed, level, ratio_floor)

    if not variety.is_sphere_family:
        raise ValueError("whole-variety integration needs a sphere intersection (one free point)")
    if coordinates is None:
        charts = admissible_charts(variety, ratio_floor)
        if not charts:
            raise ChartBoundaryError("no admissible coordinate set")
        J = charts[0]
    else:
        J = tuple(sorted(coordinates))
    n = 2**level
    fine, used = _sheet_integral(variety, g, J, n, ratio_floor)
    coarse, _ = _sheet_integral(variety, g, J, n // 2, ratio_floor)
    return ChartIntegral(fine, abs(fine - coarse), J, used)
