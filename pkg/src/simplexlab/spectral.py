"""Fourier-side diagnostics.

Convention: ``f^(xi) = integral f(x) exp(-2 pi i x.xi) dx``. Transforms of
atomic measures are exact exponential sums; grid transforms are never used
for the measures themselves.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .errors import UnderResolvedError
from .estimators import CountEstimate
from .euclid_config import Simplex, SphereSlice, intersect_spheres_batch
from .measure_forge import PointMassMeasure
from .mollify import MollifierSpec, kernel_profile, radial_kernel
from .rng import DEFAULT_CHUNK, Moments, chunk_sizes, map_ordered, substream
from .sampler import sample_simplex_chain

_BLOCK = 1 << 22


def fourier_transform(mu: PointMassMeasure, xi) -> np.ndarray:
    """``mu^(xi) = sum_a w_a exp(-2 pi i a.xi)`` for frequencies ``xi`` of shape (M, k)."""
    xi = np.atleast_2d(np.asarray(xi, float))
    if xi.shape[1] != mu.ambient_dim:
        raise ValueError("frequency dimension does not match the measure")
    out = np.empty(len(xi), complex)
    step = max(1, _BLOCK // max(mu.n_atoms, 1))
    for s in range(0, len(xi), step):
        phase = -2 * np.pi * (xi[s:s + step] @ mu.points.T)
        out[s:s + step] = np.exp(1j * phase) @ mu.weights
    return out


@dataclass(frozen=True)
class SpectrumGrid:
    """Complex ``mu^`` on the tensor grid ``axis^k``."""

    values: np.ndarray
    axis: np.ndarray

    @property
    def k(self) -> int:
        return self.values.ndim

    @property
    def spacing(self) -> float:
        return float(self.axis[1] - self.axis[0])

    @property
    def max_frequency(self) -> float:
        return float(self.axis[-1])

    @property
    def abs2(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.k), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def integrate(self, weight=None) -> float:
        """Trapezoid sum of ``|mu^|^2 * weight`` (weight given on the nodes)."""
        f = self.abs2 if weight is None else self.abs2 * np.asarray(weight).reshape(self.values.shape)
        return float(np.sum(f) * self.spacing**self.k)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"xi{i}" for i in range(self.k)] + ["re", "im", "abs2"])
            for xi, v in zip(self.nodes(), self.values.reshape(-1)):
                w.writerow([repr(float(c)) for c in xi] + [repr(float(v.real)), repr(float(v.imag)), repr(float(abs(v) ** 2))])


def frequency_axis(max_frequency: float, spacing: float) -> np.ndarray:
    """Symmetric axis ``-m h .. m h`` covering ``[-max_frequency, max_frequency]``."""
    if max_frequency <= 0 or spacing <= 0:
        raise ValueError("max frequency and spacing must be positive")
    m = int(math.ceil(max_frequency / spacing - 1e-12))
    return spacing * np.arange(-m, m + 1)


def measure_spectrum(mu: PointMassMeasure, max_frequency: float, spacing: float) -> SpectrumGrid:
    axis = frequency_axis(max_frequency, spacing)
    shape = (len(axis),) * mu.ambient_dim
    mesh = np.meshgrid(*([axis] * mu.ambient_dim), indexing="ij")
    xi = np.stack([m.reshape(-1) for m in mesh], axis=1)
    return SpectrumGrid(fourier_transform(mu, xi).reshape(shape), axis)


@dataclass(frozen=True)
class IdentityCheck:
    frequency_side: float
    measure_side: float

    @property
    def relative_gap(self) -> float:
        return abs(self.frequency_side - self.measure_side) / abs(self.measure_side)


def spectral_identity_check(
    mu: PointMassMeasure,
    epsilon: float,
    spec: MollifierSpec | None = None,
    spacing: float | None = None,
) -> IdentityCheck:
    """Compare ``int |mu^|^2 psi^(eps xi) dxi`` with ``sum_a w_a mu_eps(a)``.

    The frequency side is a trapezoid sum over ``|xi_i| <= 1/eps``; the
    default spacing is ``1/(4 diam)`` (``1/4`` for a single atom).
    """
    spec = (spec or MollifierSpec(epsilon)).with_epsilon(epsilon)
    k = mu.ambient_dim
    diam = mu.diameter()
    limit = 1.0 / (4 * diam) if diam > 0 else 0.25
    if spacing is None:
        spacing = limit
    if spacing > limit * (1 + 1e-12):
        raise UnderResolvedError(f"frequency spacing {spacing:g} exceeds 1/(4 diam) = {limit:g}")
    kern = radial_kernel(k, spec.bump_support_radius)
    # psi^ vanishes for |eps xi| >= 2b
    reach = 2 * spec.bump_support_radius / epsilon
    spectrum = measure_spectrum(mu, reach, spacing)
    radius = np.linalg.norm(spectrum.nodes(), axis=1)
    lhs = spectrum.integrate(kern.psi_hat(epsilon * radius))
    rhs = 0.0
    pts, w = mu.points, mu.weights
    step = max(1, _BLOCK // max(mu.n_atoms, 1))
    for s in range(0, mu.n_atoms, step):
        diff = pts[s:s + step, None, :] - pts[None, :, :]
        rhs += float(w[s:s + step] @ (kernel_profile(spec, diff.reshape(-1, k)).reshape(-1, mu.n_atoms) @ w))
    return IdentityCheck(lhs, rhs)


def psi_hat_increment(k: int, epsilon: float, b: float = 0.5, n: int = 2001) -> float:
    """``max |psi^(2 eps xi) - psi^(eps xi)|`` over ``|xi| <= eps^(-1/2)``."""
    q = np.linspace(0.0, epsilon ** 0.5, n)
    kern = radial_kernel(k, b)
    return float(np.max(np.abs(kern.psi_hat(2 * q) - kern.psi_hat(q))))


# --------------------------------------------------------------------------
# sphere measures


def radial_factor(p: int, t) -> np.ndarray:
    """``int_{S^p} exp(-i t u_1) dsigma(u)`` for the normalized measure on ``S^p``."""
    t = np.abs(np.asarray(t, float))
    if p == 0:
        return np.cos(t)
    if p == 1:
        return special.j0(t)
    norm = special.beta(0.5, p / 2)

    def one(tt):
        val, _ = integrate.quad(lambda th: np.cos(tt * np.cos(th)) * np.sin(th) ** (p - 1), 0.0, np.pi,
                                epsabs=1e-10, limit=400)
        return val / norm

    flat = np.array([one(tt) for tt in t.reshape(-1)])
    return flat.reshape(t.shape)


def sphere_fourier(sl: SphereSlice, xi) -> np.ndarray:
    """Transform of the normalized surface measure on the slice at ``xi`` (shape (M, d) or (d,))."""
    xi = np.asarray(xi, float)
    single = xi.ndim == 1
    xi = np.atleast_2d(xi)
    nb = sl.normal_basis
    tangent = xi - (xi @ nb.T) @ nb if nb.size else xi
    t = 2 * np.pi * sl.radius * np.linalg.norm(tangent, axis=1)
    out = np.exp(-2j * np.pi * (xi @ sl.center)) * radial_factor(sl.sphere_dim, t)
    return out[0] if single else out


def _last_slices(simplex: Simplex, rng, size):
    """Slices carrying the last vertex, given chains of the earlier ones."""
    v = simplex.normalized().vertices
    n = len(v)
    if n < 3:
        raise ValueError("need at least three vertices")
    head = Simplex(v[:-1])
    chain = sample_simplex_chain(head, rng, size)
    sq = np.sum((v[:-1] - v[-1]) ** 2, axis=1)
    return intersect_spheres_batch(chain.points, np.broadcast_to(sq, (size, n - 1)))


def I_lambda_estimate(
    simplex: Simplex,
    lam: float,
    xi,
    n_samples: int = 100_000,
    seed: int = 0,
    threads: int | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> list[CountEstimate]:
    """``I_lam(xi) = E |sigma^_{x_1..x_{n-1}}(lam xi)|^2`` over simplex chains.

    All frequencies share the same chains. The ``epsilon`` field of each
    result holds ``|xi|``.
    """
    xi = np.atleast_2d(np.asarray(xi, float))
    sizes = chunk_sizes(n_samples, chunk)

    def work(i):
        rng = substream(seed, "I_lambda", i)
        batch = _last_slices(simplex, rng, sizes[i])
        nb = batch.normal_basis
        z = lam * xi
        tang = z[None, :, :] - np.einsum("bmj,bmd->bjd", np.einsum("bmd,jd->bmj", nb, z), nb)
        t = 2 * np.pi * batch.radius[:, None] * np.linalg.norm(tang, axis=2)
        return Moments.of(radial_factor(batch.sphere_dim, t) ** 2)

    mom = Moments.combine(map_ordered(work, len(sizes), threads))
    norms = np.linalg.norm(xi, axis=1)
    return [CountEstimate(float(m), float(se), n_samples, lam, float(r))
            for m, se, r in zip(np.atleast_1d(mom.mean), np.atleast_1d(mom.std_error), norms)]


@dataclass(frozen=True)
class DecaySlope:
    slope: float
    bound_exponent: float = -1.0


def I_lambda_slope(estimates: Sequence[CountEstimate]) -> DecaySlope:
    """Least-squares slope of ``log I`` against ``log |xi|``."""
    r = np.array([e.epsilon for e in estimates])
    v = np.array([e.value for e in estimates])
    if np.any(r <= 0) or np.any(v <= 0):
        raise ValueError("log-log fit needs positive |xi| and values")
    return DecaySlope(float(np.polyfit(np.log(r), np.log(v), 1)[0]))


def assemble_J(spectrum: SpectrumGrid, epsilon: float, i_lambda, b: float = 0.5) -> float:
    """``int |mu^|^2 (psi^(2 eps xi) - psi^(eps xi))^2 I(xi) dxi`` by the trapezoid rule.

    ``i_lambda`` maps an (M, k) array of frequencies to values of ``I``.
    """
    nodes = spectrum.nodes()
    kern = radial_kernel(spectrum.k, b)
    r = np.linalg.norm(nodes, axis=1)
    inc = (kern.psi_hat(2 * epsilon * r) - kern.psi_hat(epsilon * r)) ** 2
    return spectrum.integrate(inc * np.asarray(i_lambda(nodes), float))
