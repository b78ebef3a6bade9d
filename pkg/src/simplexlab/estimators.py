"""Monte Carlo estimates of the counting functionals.

``T_{lambda V}(f) = int f(x) prod_j f(x - lambda x_j) d(chain) dx`` with the
chain drawn by :mod:`simplexlab.sampler` and ``x`` uniform on the grid box
(or drawn from the grid density, with the inverse density as weight).
All estimates are computed chunk by chunk on seeded substreams, so they do
not depend on the number of worker threads.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import (
    BoxCoverageError,
    InsufficientSpanError,
    InvariantViolation,
    NormalizationError,
    ResolutionError,
)
from .euclid_config import Simplex
from .graph_config import DistanceGraph, elimination_order
from .mollify import GridFunction, MollifierSpec, mollify
from .measure_forge import PointMassMeasure
from .rng import DEFAULT_CHUNK, Moments, chunk_sizes, map_ordered, substream
from .sampler import sample_graph_config, sample_simplex_chain

CSV_HEADER = "lambda,epsilon,T,std_err,n_samples"


@dataclass(frozen=True)
class CountEstimate:
    value: float
    std_error: float
    n_samples: int
    lam: float
    epsilon: float = math.nan

    def csv_row(self) -> str:
        return f"{self.lam!r},{self.epsilon!r},{self.value!r},{self.std_error!r},{self.n_samples}"


def write_estimates_csv(path, estimates: Sequence[CountEstimate]) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for e in estimates:
            fh.write(e.csv_row() + "\n")


@dataclass(frozen=True)
class Shape:
    """A simplex (``eta`` ignored) or a distance graph with cutoff width ``eta``."""

    simplex: Simplex | None = None
    graph: DistanceGraph | None = None
    eta: float = math.inf
    order: tuple | None = None

    def __post_init__(self):
        if (self.simplex is None) == (self.graph is None):
            raise ValueError("give exactly one of simplex or graph")
        if self.graph is not None and self.order is None:
            object.__setattr__(self, "order", elimination_order(self.graph).order)

    @property
    def ambient_dim(self) -> int:
        return (self.simplex or self.graph).vertices.shape[1]

    @property
    def diameter(self) -> float:
        v = (self.simplex or self.graph).vertices
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))

    def sample(self, rng, size):
        if self.simplex is not None:
            return sample_simplex_chain(self.simplex, rng, size)
        return sample_graph_config(self.graph, self.order, self.eta, rng, size)


def as_shape(obj, eta: float = math.inf) -> Shape:
    if isinstance(obj, Shape):
        return obj
    if isinstance(obj, Simplex):
        return Shape(simplex=obj)
    if isinstance(obj, DistanceGraph):
        return Shape(graph=obj, eta=eta)
    raise TypeError("expected a Simplex or DistanceGraph (or a Shape wrapping one)")


def _check_coverage(grid: GridFunction, shape: Shape, lam: float, tol: float = 1e-4) -> None:
    if shape.ambient_dim != grid.k:
        raise ValueError("shape and grid live in different dimensions")
    band = lam * shape.diameter
    if band >= grid.halfwidth:
        raise BoxCoverageError("grid box is smaller than the dilated shape")
    ax = np.abs(grid.axis)
    inner = ax < grid.halfwidth - band - grid.spacing
    mask = inner
    for _ in range(grid.k - 1):
        mask = np.multiply.outer(mask, inner)
    total = grid.values.sum()
    if total > 0 and grid.values[~mask].sum() > tol * total:
        raise BoxCoverageError(
            f"more than {tol:g} of the mass lies within lambda*d = {band:.3g} of the box edge; enlarge the grid"
        )


class XSampler:
    """Draws of the base point ``x`` and their inverse densities.

    ``"uniform"``: uniform on the node box ``[-L, L - h]^k``.
    ``"density"``: a node chosen with probability proportional to the
    averaged grid values, jittered uniformly in its cell, mixed with a
    fraction ``floor`` of uniform draws so the density never vanishes.
    """

    def __init__(self, grids: Sequence[GridFunction], mode: str = "uniform", floor: float = 0.01):
        if mode not in ("uniform", "density"):
            raise ValueError("x sampler must be 'uniform' or 'density'")
        g0 = grids[0]
        self.mode, self.floor, self.k = mode, floor, g0.k
        self.L, self.h, self.n = g0.halfwidth, g0.spacing, g0.n
        if mode == "density":
            vals = sum(np.maximum(g.values, 0.0) for g in grids).reshape(-1)
            total = vals.sum()
            if total <= 0:
                self.mode = "uniform"
            else:
                self.p = vals / total
                self.cdf = np.cumsum(self.p)
                self.cdf[-1] = 1.0

    def draw(self, rng, size):
        k, L, h = self.k, self.L, self.h
        if self.mode == "uniform":
            vol = (2 * L - h) ** k
            return rng.uniform(-L, L - h, size=(size, k)), np.full(size, vol)
        box = (2 * L) ** k
        pick = rng.uniform(size=size)
        node = np.minimum(np.searchsorted(self.cdf, rng.uniform(size=size), side="right"), self.p.size - 1)
        idx = np.array(np.unravel_index(node, (self.n,) * k)).T
        jitter = rng.uniform(-0.5, 0.5, size=(size, k))
        x_dens = -L + h * (idx + jitter)
        x_unif = rng.uniform(-L - h / 2, L - h / 2, size=(size, k))
        x = np.where((pick < self.floor)[:, None], x_unif, x_dens)
        cell = np.round((x + L) / h).astype(np.int64)
        cell = np.clip(cell, 0, self.n - 1)
        flat = np.ravel_multi_index(tuple(cell.T), (self.n,) * k)
        q = self.floor / box + (1 - self.floor) * self.p[flat] / h**k
        return x, 1.0 / q


def _integrand(grids: Sequence[GridFunction], shape: Shape, lams: Sequence[float], rng, size, xs: XSampler):
    """Per-sample values for each (grid, lambda) pair on one shared draw."""
    x, inv_q = xs.draw(rng, size)
    chain = shape.sample(rng, size)
    pts = chain.points[:, 1:]
    w = chain.scaled_weight() if shape.graph is not None else chain.weight
    cols = []
    for grid in grids:
        base = grid.interpolate(x)
        for lam in lams:
            val = base * w * inv_q
            for j in range(pts.shape[1]):
                val = val * grid.interpolate(x - lam * pts[:, j])
            cols.append(val)
    return np.stack(cols, axis=1)


def _run(fn, n_samples: int, seed: int, tag: str, threads, chunk: int) -> Moments:
    sizes = chunk_sizes(n_samples, chunk)
    parts = map_ordered(lambda i: Moments.of(fn(substream(seed, tag, i), sizes[i])), len(sizes), threads)
    return Moments.combine(parts)


def _validate_lambda(lam):
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")


def estimate_T(
    grid: GridFunction,
    shape,
    lam: float,
    n_samples: int = 100_000,
    seed: int = 0,
    threads: int | None = None,
    tag: str = "T",
    chunk: int = DEFAULT_CHUNK,
    check_coverage: bool = True,
    eta: float = math.inf,
    x_sampler: str = "uniform",
) -> CountEstimate:
    """One estimate of ``T_{lambda V}(grid)`` (simplex) or ``T_{lambda Gamma}(grid)`` (graph)."""
    shape = as_shape(shape, eta)
    _validate_lambda(lam)
    if check_coverage:
        _check_coverage(grid, shape, lam)
    xs = XSampler([grid], x_sampler)
    mom = _run(lambda rng, size: _integrand([grid], shape, [lam], rng, size, xs), n_samples, seed, tag, threads, chunk)
    eps = float(grid.meta.get("epsilon", math.nan))
    return CountEstimate(float(mom.mean[0]), float(mom.std_error[0]), mom.n, lam, eps)


def estimate_T_simplex(grid: GridFunction, simplex: Simplex, lam: float, n_samples: int = 100_000, **kw) -> CountEstimate:
    """``T_{lambda V}`` against normalized chain measures."""
    return estimate_T(grid, Shape(simplex=simplex), lam, n_samples, **kw)


def estimate_T_graph(
    grid: GridFunction, graph: DistanceGraph, lam: float, eta: float = math.inf, n_samples: int = 100_000, **kw
) -> CountEstimate:
    """``T_{lambda Gamma}`` against ``phi * omega_F`` (Gram weights and slice areas included)."""
    return estimate_T(grid, Shape(graph=graph, eta=eta), lam, n_samples, **kw)


def chain_normalization(graph: DistanceGraph, order=None) -> float:
    """``prod_j c(T_j) |S_j|`` at the reference configuration.

    For the complete graph of a simplex with no cutoff this is the constant
    ratio between the graph and simplex estimates.
    """
    rng = np.random.default_rng(0)
    b = sample_graph_config(graph, order, math.inf, rng, 1)
    return float(b.scaled_weight()[0])


# --------------------------------------------------------------------------
# telescoping and decay


@dataclass(frozen=True)
class TelescopeResult:
    coarse: CountEstimate
    fine: CountEstimate
    difference: float
    std_error: float

    @property
    def abs_difference(self) -> float:
        return abs(self.difference)


def telescoping_pair(
    coarse_grid: GridFunction,
    fine_grid: GridFunction,
    shape,
    lam: float,
    n_samples: int = 100_000,
    seed: int = 0,
    threads: int | None = None,
    tag: str = "T",
    chunk: int = DEFAULT_CHUNK,
    check_coverage: bool = True,
    x_sampler: str = "uniform",
) -> TelescopeResult:
    """Both estimates and their difference on the same random draws."""
    shape = as_shape(shape)
    _validate_lambda(lam)
    if coarse_grid.values.shape != fine_grid.values.shape or coarse_grid.halfwidth != fine_grid.halfwidth:
        raise ValueError("both grids must share the same nodes")
    if check_coverage:
        _check_coverage(coarse_grid, shape, lam)
        _check_coverage(fine_grid, shape, lam)

    xs = XSampler([coarse_grid, fine_grid], x_sampler)

    def fn(rng, size):
        v = _integrand([coarse_grid, fine_grid], shape, [lam], rng, size, xs)
        return np.column_stack([v, v[:, 0] - v[:, 1]])

    mom = _run(fn, n_samples, seed, tag, threads, chunk)
    e_c = float(coarse_grid.meta.get("epsilon", math.nan))
    e_f = float(fine_grid.meta.get("epsilon", math.nan))
    coarse = CountEstimate(float(mom.mean[0]), float(mom.std_error[0]), mom.n, lam, e_c)
    fine = CountEstimate(float(mom.mean[1]), float(mom.std_error[1]), mom.n, lam, e_f)
    return TelescopeResult(coarse, fine, float(mom.mean[2]), float(mom.std_error[2]))


def telescoping_difference(
    mu: PointMassMeasure,
    shape,
    lam: float,
    epsilon: float,
    n_samples: int = 100_000,
    seed: int = 0,
    halfwidth: float = 2.0,
    points: int = 512,
    spec: MollifierSpec | None = None,
    coarse_epsilon: float | None = None,
    **kw,
) -> TelescopeResult:
    """``T(mu_{2 eps}) - T(mu_eps)`` with common random numbers."""
    spec = spec or MollifierSpec(epsilon)
    coarse_epsilon = 2 * epsilon if coarse_epsilon is None else coarse_epsilon
    if coarse_epsilon > 1:
        raise ValueError("2*epsilon must not exceed 1")
    floor = 4 * mu.atom_spacing() if mu.n_atoms > 1 else 0.0
    if epsilon < floor - 1e-15:
        raise ResolutionError(f"epsilon {epsilon:.4g} under the atom-spacing floor {floor:.4g}")
    fine = mollify(mu, spec.with_epsilon(epsilon), halfwidth, points)
    coarse = fine if coarse_epsilon == epsilon else mollify(mu, spec.with_epsilon(coarse_epsilon), halfwidth, points)
    return telescoping_pair(coarse, fine, shape, lam, n_samples, seed, **kw)


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    predicted: float | None = None

    @property
    def meets_prediction(self) -> bool | None:
        """One-sided: the measured decay is at least as fast as predicted."""
        return None if self.predicted is None else self.slope >= self.predicted


def predicted_exponent(k: int, s: float) -> float:
    return (k - 0.5) * (s - k) + 0.25


def in_limit_regime(k: int, s: float) -> bool:
    """Whether ``k - 1/(4k) <= s < k``, where the limit checks are expected to hold."""
    return k - 1 / (4 * k) <= s < k


def decay_regression(pairs, k: int | None = None, s: float | None = None, confidence: float = 0.95) -> DecayFit:
    """Least-squares slope of ``log|dT|`` against ``log eps`` with a t-interval."""
    arr = np.asarray(pairs, float)
    if arr.ndim != 2 or arr.shape[0] < 4:
        raise InsufficientSpanError("need at least four (epsilon, |dT|) pairs")
    eps, val = arr[:, 0], np.abs(arr[:, 1])
    if eps.max() / eps.min() < 4 - 1e-12:
        raise InsufficientSpanError("epsilons must span at least two octaves")
    if np.any(val <= 0) or np.any(eps <= 0):
        raise ValueError("values must be positive for a log-log fit")
    fit = stats.linregress(np.log(eps), np.log(val))
    tq = stats.t.ppf(0.5 + confidence / 2, len(eps) - 2)
    half = tq * fit.stderr
    pred = predicted_exponent(k, s) if k is not None and s is not None else None
    return DecayFit(float(fit.slope), float(fit.intercept), float(fit.slope - half), float(fit.slope + half), pred)


# --------------------------------------------------------------------------
# superlevel sets


@dataclass(frozen=True)
class Superlevel:
    indicator: GridFunction
    measure: float
    alpha: float
    c: float
    f_sup: float


def superlevel_constant(truncated: Sequence[GridFunction], s: float) -> float:
    """``c = 1 / max_eps eps^(k-s) sup(mu~_eps)`` so that ``0 <= f_eps <= 1`` at every eps."""
    best = 0.0
    for g in truncated:
        eps = float(g.meta["epsilon"])
        best = max(best, eps ** (g.k - s) * g.sup())
    if best <= 0:
        raise NormalizationError("truncated densities vanish")
    return 1.0 / best


def superlevel_set(mu_tilde: GridFunction, s: float, epsilon: float, c: float | None = None, tol: float = 1e-3) -> Superlevel:
    """``A = {f >= alpha/2}`` with ``f = c eps^(k-s) mu~`` and ``alpha = int f``."""
    k = mu_tilde.k
    scale = epsilon ** (k - s)
    if c is None:
        c = 1.0 / (scale * mu_tilde.sup())
    f = c * scale * mu_tilde.values
    f_sup = float(f.max())
    if f_sup > 1 + 1e-12:
        raise NormalizationError(f"sup f = {f_sup:.6f} exceeds 1 for c = {c:.6g}")
    alpha = float(f.sum() * mu_tilde.spacing**k)
    ind = (f >= alpha / 2).astype(float)
    measure = float(ind.sum() * mu_tilde.spacing**k)
    if measure < alpha / 2 - tol:
        raise InvariantViolation(f"|A| = {measure:.6g} < alpha/2 = {alpha / 2:.6g}")
    grid = mu_tilde.like(ind, kind="indicator")
    return Superlevel(grid, measure, alpha, float(c), f_sup)


# --------------------------------------------------------------------------
# lambda scans


@dataclass(frozen=True)
class LambdaScan:
    estimates: tuple
    integral: float
    integral_se: float


def lambda_scan(
    grid: GridFunction,
    shape,
    lambdas: Sequence[float],
    n_samples: int = 100_000,
    seed: int = 0,
    threads: int | None = None,
    tag: str = "T",
    chunk: int = DEFAULT_CHUNK,
    check_coverage: bool = True,
    eta: float = math.inf,
    x_sampler: str = "uniform",
) -> LambdaScan:
    """``T_{lambda V}`` on a lambda grid and the trapezoid of ``lambda^1/2 T``.

    All lambdas share the same draws, so the standard error of the integral
    accounts for their correlation.
    """
    shape = as_shape(shape, eta)
    lams = np.asarray(sorted(lambdas), float)
    for lam in lams:
        _validate_lambda(lam)
        if check_coverage:
            _check_coverage(grid, shape, lam)
    if len(lams) > 1:
        tw = np.zeros(len(lams))
        dl = np.diff(lams)
        tw[:-1] += dl / 2
        tw[1:] += dl / 2
        tw *= np.sqrt(lams)
    else:
        warnings.warn("a single lambda gives a zero-width integral", RuntimeWarning, stacklevel=2)
        tw = np.zeros(1)

    xs = XSampler([grid], x_sampler)

    def fn(rng, size):
        v = _integrand([grid], shape, lams, rng, size, xs)
        return np.column_stack([v, v @ tw])

    mom = _run(fn, n_samples, seed, tag, threads, chunk)
    eps = float(grid.meta.get("epsilon", math.nan))
    ests = tuple(
        CountEstimate(float(mom.mean[i]), float(mom.std_error[i]), mom.n, float(lam), eps) for i, lam in enumerate(lams)
    )
    return LambdaScan(ests, float(mom.mean[-1]), float(mom.std_error[-1]))
