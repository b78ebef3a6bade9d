"""Band-limited mollifier and mollified densities on uniform grids.

The kernel is built from the radial bump ``chi(xi) = exp(-1/(1 - |xi/b|^2))``
(``b`` = bump support radius, default 1/2). Its Fourier transform is
``psi_hat = (chi * chi)(xi) / (chi * chi)(0)``, an autocorrelation supported in
``|xi| <= 2b <= 1``, so the spatial kernel is ``psi = |chi_check|^2 / ||chi||_2^2``
and is nonnegative. ``chi_check`` is tabulated on a radial grid by a Hankel
transform and interpolated with a cubic spline; ``psi_hat`` is tabulated
separately from a direct autocorrelation quadrature so that the two sides can
be checked against each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree
from scipy.special import gamma, jv

from .errors import BoxTooSmallError, MassCollapseError, ResolutionError
from .measure_forge import PointMassMeasure

TABLE_RADIUS = 48.0
TABLE_STEP = 0.005
MASS_TOL = 1e-4
MAX_OFFSET_CLASSES = 16


@dataclass(frozen=True)
class MollifierSpec:
    epsilon: float
    bump_support_radius: float = 0.5
    truncation_c: float = 0.25

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if not 0 < self.bump_support_radius <= 0.5:
            raise ValueError("bump support radius must lie in (0, 1/2]")
        if self.truncation_c <= 0:
            raise ValueError("truncation constant must be positive")

    def with_epsilon(self, epsilon: float) -> "MollifierSpec":
        return MollifierSpec(epsilon, self.bump_support_radius, self.truncation_c)


def sphere_area(p: int, radius: float = 1.0):
    """Surface area of the p-dimensional sphere of the given radius."""
    return 2 * math.pi ** ((p + 1) / 2) / math.gamma((p + 1) / 2) * np.asarray(radius) ** p


def bump(t):
    """``exp(-1/(1 - t^2))`` on ``|t| < 1``, zero elsewhere."""
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def cutoff(r):
    """Radial cutoff: 1 for r <= 1/2, 0 for r >= 2, smooth in between."""
    return smooth_step((2.0 - np.asarray(r, float)) / 1.5)


class RadialKernel:
    """Tables for psi (space) and psi_hat (frequency) in dimension k."""

    def __init__(self, k: int, b: float = 0.5, n_quad: int = 512):
        self.k = k
        self.b = b
        nodes, w = np.polynomial.legendre.leggauss(n_quad)
        rho = 0.5 * b * (nodes + 1)
        w = 0.5 * b * w
        chi = bump(rho / b)
        surf = sphere_area(k - 1)
        self.l2_norm_sq = float(surf * np.sum(w * chi**2 * rho ** (k - 1)))

        r = np.arange(0.0, TABLE_RADIUS + TABLE_STEP / 2, TABLE_STEP)
        check = np.empty_like(r)
        check[0] = surf * np.sum(w * chi * rho ** (k - 1))
        nu = k / 2 - 1
        for start in range(1, r.size, 2048):
            rr = r[start:start + 2048, None]
            kern = jv(nu, 2 * np.pi * rr * rho[None, :]) * rho[None, :] ** (k / 2)
            check[start:start + 2048] = 2 * np.pi * rr[:, 0] ** (1 - k / 2) * (kern @ (w * chi))
        self.radii = r
        self._check = CubicSpline(r, check, bc_type=((1, 0.0), "not-a-knot"))
        psi = check**2 / self.l2_norm_sq
        # tail mass beyond each table radius, integrated from the outside in
        dens = surf * psi * r ** (k - 1)
        seg = 0.5 * (dens[1:] + dens[:-1]) * TABLE_STEP
        self._tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        self._psi_hat = self._autocorrelation_table()

    def psi(self, r):
        """Kernel at epsilon = 1 as a function of the radius."""
        r = np.abs(np.asarray(r, float))
        out = self._check(np.minimum(r, TABLE_RADIUS)) ** 2 / self.l2_norm_sq
        return np.where(r <= TABLE_RADIUS, out, 0.0)

    def tail_mass(self, radius):
        """Mass of psi outside the ball of the given radius (epsilon = 1)."""
        return np.interp(np.asarray(radius, float), self.radii, self._tail, right=0.0)

    def psi_hat(self, q):
        q = np.abs(np.asarray(q, float))
        out = self._psi_hat(np.minimum(q, 2 * self.b))
        return np.where(q < 2 * self.b, np.clip(out, 0.0, 1.0), 0.0)

    def _autocorrelation_table(self, n_q: int = 1201, n_quad: int = 160):
        b, k = self.b, self.k
        qs = np.linspace(0.0, 2 * b, n_q)
        gl, gw = np.polynomial.legendre.leggauss(n_quad)
        vals = np.empty(n_q)
        for i, q in enumerate(qs):
            lo, hi = q - b, b
            a = 0.5 * (hi - lo) * (gl + 1) + lo
            wa = 0.5 * (hi - lo) * gw
            if k == 1:
                vals[i] = np.sum(wa * bump(a / b) * bump((a - q) / b))
                continue
            top = np.sqrt(np.maximum(b**2 - np.maximum(a**2, (a - q) ** 2), 0.0))
            beta = 0.5 * top[:, None] * (gl[None, :] + 1)
            wb = 0.5 * top[:, None] * gw[None, :]
            f = bump(np.sqrt(a[:, None] ** 2 + beta**2) / b) * bump(np.sqrt((a[:, None] - q) ** 2 + beta**2) / b)
            inner = sphere_area(k - 2) * np.sum(wb * f * beta ** (k - 2), axis=1)
            vals[i] = np.sum(wa * inner)
        vals = vals / vals[0]
        return CubicSpline(qs, vals, bc_type=((1, 0.0), "not-a-knot"))


@lru_cache(maxsize=None)
def radial_kernel(k: int, b: float = 0.5) -> RadialKernel:
    return RadialKernel(k, b)


def kernel_profile(spec: MollifierSpec, x) -> np.ndarray:
    """``psi_eps(x) = eps^-k psi(x / eps)`` for points ``x`` of shape (..., k)."""
    x = np.asarray(x, float)
    if x.ndim == 0:
        x = x[None]
    k = x.shape[-1]
    kern = radial_kernel(k, spec.bump_support_radius)
    eps = spec.epsilon
    return kern.psi(np.linalg.norm(x, axis=-1) / eps) / eps**k


def truncated_profile(spec: MollifierSpec, x) -> np.ndarray:
    """``psi_eps(x) * phi(c eps^-1/2 x)``."""
    x = np.asarray(x, float)
    r = np.linalg.norm(x, axis=-1)
    return kernel_profile(spec, x) * cutoff(spec.truncation_c * r / math.sqrt(spec.epsilon))


# --------------------------------------------------------------------------
# grid functions


@dataclass
class GridFunction:
    """Samples on the nodes ``-L + i h`` (i = 0..N-1, h = 2L/N) of [-L, L)^k."""

    values: np.ndarray
    halfwidth: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        shape = self.values.shape
        if len(set(shape)) != 1:
            raise ValueError("grid must have the same number of points per axis")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    @property
    def k(self) -> int:
        return self.values.ndim

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return 2 * self.halfwidth / self.n

    @property
    def axis(self) -> np.ndarray:
        return -self.halfwidth + self.spacing * np.arange(self.n)

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.k), indexing="ij")
        return np.stack(mesh, axis=-1)

    def mass(self) -> float:
        return float(self.values.sum() * self.spacing**self.k)

    def sup(self) -> float:
        return float(self.values.max())

    def like(self, values, **meta) -> "GridFunction":
        return GridFunction(values, self.halfwidth, {**self.meta, **meta})

    def interpolate(self, points) -> np.ndarray:
        """Multilinear interpolation; zero outside the node hull."""
        points = np.asarray(points, float)
        flat = points.reshape(-1, self.k)
        u = (flat + self.halfwidth) / self.spacing
        base = np.floor(u).astype(np.int64)
        frac = u - base
        inside = np.all((base >= 0) & (base <= self.n - 2), axis=1)
        # nodes exactly on the last grid line
        edge = np.all((base >= 0) & (base <= self.n - 1), axis=1) & np.any(base == self.n - 1, axis=1)
        edge &= np.all((base < self.n - 1) | (frac == 0), axis=1)
        base = np.where(base == self.n - 1, self.n - 2, base)
        frac = np.where(edge[:, None] & (u >= self.n - 1), 1.0, frac)
        ok = inside | edge
        out = np.zeros(flat.shape[0])
        b = base[ok]
        f = frac[ok]
        acc = np.zeros(b.shape[0])
        flat_vals = self.values.reshape(-1)
        strides = np.array([self.n ** (self.k - 1 - a) for a in range(self.k)])
        for corner in range(2**self.k):
            bits = np.array([(corner >> (self.k - 1 - a)) & 1 for a in range(self.k)])
            wgt = np.prod(np.where(bits, f, 1 - f), axis=1)
            idx = (b + bits) @ strides
            acc += wgt * flat_vals[idx]
        out[ok] = acc
        return out.reshape(points.shape[:-1])

    def to_binary(self, path) -> None:
        """Text header line ``k N L`` then row-major little-endian float64."""
        with open(path, "wb") as fh:
            fh.write(f"{self.k} {self.n} {self.halfwidth!r}\n".encode("ascii"))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "GridFunction":
        with open(path, "rb") as fh:
            k, n, L = fh.readline().decode("ascii").split()
            data = np.frombuffer(fh.read(), dtype="<f8")
        k, n = int(k), int(n)
        return cls(data.reshape((n,) * k).copy(), float(L))

    def to_csv(self, path, max_points: int = 10**6) -> None:
        if self.values.size > max_points:
            raise ValueError("grid too large for CSV export")
        header = ",".join([f"x{i + 1}" for i in range(self.k)] + ["value"])
        table = np.column_stack([self.nodes().reshape(-1, self.k), self.values.reshape(-1)])
        np.savetxt(Path(path), table, fmt="%.17g", delimiter=",", header=header, comments="")


# --------------------------------------------------------------------------
# convolution with atoms


def _offset_classes(points, halfwidth, h):
    u = (points + halfwidth) / h
    base = np.floor(u)
    frac = u - base
    snap = frac > 1 - 1e-12
    base[snap] += 1
    frac[snap] = 0.0
    key = np.round(frac * 1e12).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    return base.astype(np.int64), frac[first], inverse.reshape(-1)


def _convolve_atoms(mu: PointMassMeasure, profile, halfwidth: float, n: int, support: float):
    """``sum_a w_a profile(x - a)`` at every node; profile vanishes beyond ``support``."""
    k = mu.ambient_dim
    h = 2 * halfwidth / n
    base, fracs, inverse = _offset_classes(mu.points, halfwidth, h)
    if len(fracs) <= MAX_OFFSET_CLASSES:
        out = np.zeros((n,) * k)
        m = 2 * n
        offs = np.fft.fftfreq(m, 1.0 / m)  # 0..n-1, -n..-1
        mesh = np.stack(np.meshgrid(*([offs] * k), indexing="ij"), axis=-1)
        for c, frac in enumerate(fracs):
            members = inverse == c
            dep = np.zeros((m,) * k)
            np.add.at(dep, tuple(base[members].T), mu.weights[members])
            kern = profile((mesh - frac) * h)
            conv = np.fft.irfftn(np.fft.rfftn(dep) * np.fft.rfftn(kern), s=(m,) * k, axes=tuple(range(k)))
            out += conv[(slice(0, n),) * k]
        return np.maximum(out, 0.0)
    return _direct_sum(mu, profile, halfwidth, n, support)


def _direct_sum(mu, profile, halfwidth, n, support):
    k = mu.ambient_dim
    h = 2 * halfwidth / n
    axis = -halfwidth + h * np.arange(n)
    out = np.zeros((n,) * k)
    reach = int(math.ceil(support / h)) + 1
    for p, w in zip(mu.points, mu.weights):
        centre = np.round((p + halfwidth) / h).astype(int)
        lo = np.maximum(centre - reach, 0)
        hi = np.minimum(centre + reach + 1, n)
        if np.any(hi <= lo):
            continue
        sub = np.meshgrid(*[axis[lo[a]:hi[a]] - p[a] for a in range(k)], indexing="ij")
        window = tuple(slice(lo[a], hi[a]) for a in range(k))
        out[window] += w * profile(np.stack(sub, axis=-1))
    return out


def _check_grid(mu, spec, halfwidth, n):
    h = 2 * halfwidth / n
    if h >= spec.epsilon:
        raise ResolutionError(f"grid spacing {h:.4g} must be below epsilon {spec.epsilon:.4g}")
    kern = radial_kernel(mu.ambient_dim, spec.bump_support_radius)
    gap = np.min(np.minimum(mu.points + halfwidth, halfwidth - h - mu.points), axis=1)
    if np.any(gap < 0):
        raise BoxTooSmallError("atoms lie outside the grid box")
    leak = float(np.sum(mu.weights * kern.tail_mass(gap / spec.epsilon)))
    if leak > MASS_TOL:
        raise BoxTooSmallError(f"kernel mass outside the box is {leak:.2e} > {MASS_TOL:.0e}; enlarge halfwidth")
    return kern


def mollify(mu: PointMassMeasure, spec: MollifierSpec, halfwidth: float = 2.0, points: int = 256) -> GridFunction:
    """``mu_eps = mu * psi_eps`` sampled on the grid."""
    _check_grid(mu, spec, halfwidth, points)
    support = TABLE_RADIUS * spec.epsilon
    values = _convolve_atoms(mu, lambda x: kernel_profile(spec, x), halfwidth, points, support)
    grid = GridFunction(values, halfwidth, {"epsilon": spec.epsilon, "kind": "mollified"})
    if abs(grid.mass() - 1) > MASS_TOL:
        raise BoxTooSmallError(f"grid mass {grid.mass():.8f} differs from 1 by more than {MASS_TOL}")
    return grid


def truncate(mu_eps: GridFunction, mu: PointMassMeasure, spec: MollifierSpec) -> GridFunction:
    """``mu * (psi_eps phi_eps)`` on the grid of ``mu_eps``."""
    n, L = mu_eps.n, mu_eps.halfwidth
    support = min(2 * math.sqrt(spec.epsilon) / spec.truncation_c, TABLE_RADIUS * spec.epsilon)
    values = _convolve_atoms(mu, lambda x: truncated_profile(spec, x), L, n, support)
    # transform roundoff aside, the truncated kernel vanishes beyond its support
    dist, _ = cKDTree(mu.points).query(mu_eps.nodes().reshape(-1, mu.ambient_dim), distance_upper_bound=support)
    values[np.isinf(dist).reshape(values.shape)] = 0.0
    values = np.minimum(values, mu_eps.values)
    out = mu_eps.like(values, kind="truncated")
    if out.mass() < 0.5:
        raise MassCollapseError(f"truncated mass {out.mass():.4f} < 1/2; decrease truncation_c")
    return out


@dataclass(frozen=True)
class ScalingReport:
    epsilons: np.ndarray
    sup_norms: np.ndarray
    slope: float
    intercept: float
    expected_slope: float | None


def loglog_slope(x, y) -> tuple[float, float]:
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(intercept)


def sup_norm_scaling(
    mu: PointMassMeasure,
    s: float | None,
    epsilons,
    halfwidth: float = 2.0,
    points: int | None = None,
    spec: MollifierSpec | None = None,
) -> ScalingReport:
    """Measured ``||mu_eps||_inf`` for each epsilon and the fitted log-log slope."""
    eps = np.sort(np.asarray(epsilons, float))
    if eps[-1] / eps[0] < 4 - 1e-12:
        raise ValueError("epsilons must span at least two octaves")
    floor = 4 * mu.atom_spacing()
    if eps[0] < floor - 1e-15:
        raise ResolutionError(f"epsilon {eps[0]:.4g} under the atom-spacing floor {floor:.4g}")
    if points is None:
        points = int(2 ** math.ceil(math.log2(2 * halfwidth / (eps[0] / 4))))
    spec = spec or MollifierSpec(eps[-1])
    sups = np.array([mollify(mu, spec.with_epsilon(e), halfwidth, points).sup() for e in eps])
    slope, intercept = loglog_slope(eps, sups)
    expected = None if s is None else s - mu.ambient_dim
    return ScalingReport(eps, sups, slope, intercept, expected)
