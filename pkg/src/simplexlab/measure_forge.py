"""Self-similar fractal measures with Frostman constants and a unit-ball renormalization."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import AtomCapError, InvariantViolation, NoWitnessError, OverlapError
from .rng import substream

ATOM_CAP = 10**7
MASS_TOL = 1e-12


@dataclass(frozen=True)
class PointMassMeasure:
    """Finitely many weighted atoms in R^k.

    ``dimension_s`` is the exponent the measure is meant to witness; ``None``
    for measures that carry no dimension (a single atom, say).
    """

    points: np.ndarray
    weights: np.ndarray
    dimension_s: float | None = None

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if points.shape[0] != weights.shape[0]:
            raise ValueError("points and weights disagree in length")
        if np.any(weights < 0) or not np.all(np.isfinite(points)):
            raise ValueError("weights must be nonnegative and points finite")
        if weights.size and abs(weights.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        k = points.shape[1]
        if self.dimension_s is not None and not 0 < self.dimension_s <= k + 1e-12:
            raise ValueError("dimension_s must lie in (0, k]")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, points, dimension_s=None) -> "PointMassMeasure":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n), dimension_s)

    @classmethod
    def single_atom(cls, point) -> "PointMassMeasure":
        return cls(np.atleast_2d(np.asarray(point, dtype=float)), np.ones(1))

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    def translated(self, offset) -> "PointMassMeasure":
        return PointMassMeasure(self.points + np.asarray(offset, float), self.weights, self.dimension_s)

    def mixed(self, other: "PointMassMeasure", alpha: float) -> "PointMassMeasure":
        """``alpha * self + (1 - alpha) * other``."""
        w = np.concatenate([alpha * self.weights, (1 - alpha) * other.weights])
        w = w / w.sum()
        return PointMassMeasure(np.vstack([self.points, other.points]), w)

    def diameter(self) -> float:
        if self.n_atoms < 2:
            return 0.0
        lo, hi = self.points.min(axis=0), self.points.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def atom_spacing(self) -> float:
        """Smallest distance between two distinct atoms (0 for a single atom)."""
        if self.n_atoms < 2:
            return 0.0
        dist, _ = cKDTree(self.points).query(self.points, k=2)
        return float(dist[:, 1].min())

    def to_csv(self, path) -> None:
        k = self.ambient_dim
        header = ",".join([f"x{i + 1}" for i in range(k)] + ["weight"])
        table = np.column_stack([self.points, self.weights])
        np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")

    @classmethod
    def from_csv(cls, path, dimension_s=None) -> "PointMassMeasure":
        table = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        return cls(table[:, :-1], table[:, -1], dimension_s)


def measure_ball(mu: PointMassMeasure, center, r: float) -> float:
    """Mass of the closed ball ``B(center, r)``."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    d = np.linalg.norm(mu.points - np.asarray(center, float), axis=1)
    return float(mu.weights[d <= r].sum())


def ball_masses(mu: PointMassMeasure, centers, radii, chunk: int = 256) -> np.ndarray:
    """``out[i, j] = mu(B(centers[i], radii[j]))`` for closed balls."""
    centers = np.atleast_2d(np.asarray(centers, float))
    radii = np.asarray(radii, float)
    out = np.empty((centers.shape[0], radii.size))
    for start in range(0, centers.shape[0], chunk):
        block = centers[start:start + chunk]
        dist = np.linalg.norm(block[:, None, :] - mu.points[None, :, :], axis=2)
        order = np.argsort(dist, axis=1)
        sorted_d = np.take_along_axis(dist, order, axis=1)
        cum = np.cumsum(mu.weights[order], axis=1)
        for row in range(block.shape[0]):
            idx = np.searchsorted(sorted_d[row], radii, side="right")
            out[start + row] = np.where(idx > 0, cum[row, np.maximum(idx - 1, 0)], 0.0)
    return out


# --------------------------------------------------------------------------
# iterated function systems


@dataclass(frozen=True)
class IteratedFunctionSystem:
    """Equicontractive similarities ``x -> ratio * x + translation`` on R^k."""

    ambient_dim: int
    cells: tuple
    depth: int

    def __post_init__(self):
        cells = tuple((float(r), tuple(float(t) for t in tr)) for r, tr in self.cells)
        object.__setattr__(self, "cells", cells)
        if self.ambient_dim < 1 or self.depth < 1 or not cells:
            raise ValueError("need k >= 1 and depth >= 1 with at least one kept cell")
        ratios = {r for r, _ in cells}
        if len(ratios) != 1:
            raise ValueError("contraction ratios must all be equal")
        ratio = ratios.pop()
        if not 0 < ratio < 1:
            raise ValueError("contraction ratio must lie in (0, 1)")
        if any(len(t) != self.ambient_dim for _, t in cells):
            raise ValueError("translation has wrong dimension")
        s = self.similarity_dimension
        if not 0 < s <= self.ambient_dim + 1e-12:
            raise ValueError(f"similarity dimension {s} outside (0, k]")

    @property
    def ratio(self) -> float:
        return self.cells[0][0]

    @property
    def translations(self) -> np.ndarray:
        return np.array([t for _, t in self.cells])

    @property
    def similarity_dimension(self) -> float:
        n = len(self.cells)
        if n == 1:
            return 0.0
        return math.log(n) / math.log(1.0 / self.ratio)

    def overlapping_pairs(self) -> list[tuple[int, int]]:
        """Pairs of cells whose images of the open unit cube intersect."""
        t = self.translations
        bad = []
        for a, b in itertools.combinations(range(len(t)), 2):
            if np.all(np.abs(t[a] - t[b]) < self.ratio - 1e-15):
                bad.append((a, b))
        return bad


def build_cantor_dust(ifs: IteratedFunctionSystem, atom_cap: int = ATOM_CAP) -> PointMassMeasure:
    """Equal-weight atoms at the centers of the depth-level cells."""
    bad = ifs.overlapping_pairs()
    if bad:
        raise OverlapError(f"open set condition fails for cells {bad}")
    n_atoms = len(ifs.cells) ** ifs.depth
    if n_atoms > atom_cap:
        raise AtomCapError(f"{n_atoms} atoms exceed the cap {atom_cap}")
    r = ifs.ratio
    t = ifs.translations
    pts = np.full((1, ifs.ambient_dim), 0.5)
    for _ in range(ifs.depth):
        pts = (t[:, None, :] + r * pts[None, :, :]).reshape(-1, ifs.ambient_dim)
    s = ifs.similarity_dimension
    return PointMassMeasure.uniform(pts, dimension_s=s)


def cube_subdivision_ifs(ambient_dim: int, keep, depth: int, divisions: int = 2, offset=None):
    """IFS keeping the listed sub-cubes of a ``divisions^k`` split of [0,1]^k.

    ``keep`` holds integer multi-indices; ``offset`` shifts the attractor.
    """
    r = 1.0 / divisions
    shift = np.zeros(ambient_dim) if offset is None else np.asarray(offset, float) * (1 - r)
    cells = [(r, tuple(np.asarray(idx, float) * r + shift)) for idx in keep]
    return IteratedFunctionSystem(ambient_dim, tuple(cells), depth)


def middle_thirds_ifs(depth: int, offset: float = 0.0) -> IteratedFunctionSystem:
    return cube_subdivision_ifs(1, [(0,), (2,)], depth, divisions=3, offset=[offset])


def sierpinski_ifs(depth: int, offset=None) -> IteratedFunctionSystem:
    """Three of the four half-scale quadrants of the unit square."""
    return cube_subdivision_ifs(2, [(0, 0), (1, 0), (0, 1)], depth, offset=offset)


def full_cube_ifs(ambient_dim: int, depth: int, offset=None) -> IteratedFunctionSystem:
    keep = list(itertools.product(range(2), repeat=ambient_dim))
    return cube_subdivision_ifs(ambient_dim, keep, depth, offset=offset)


# --------------------------------------------------------------------------
# Frostman constants


@dataclass(frozen=True)
class FrostmanReport:
    exponent_s: float
    constant_K: float
    witness_ball: tuple
    radii_scanned: np.ndarray
    centers_scanned: np.ndarray = field(repr=False)
    diverged: bool = False


def radius_ladder(r_min: float, r_max: float = 2.0, per_octave: int = 4) -> np.ndarray:
    n = max(int(math.ceil(per_octave * math.log2(r_max / r_min))), 1)
    return r_min * (r_max / r_min) ** (np.arange(n + 1) / n)


def estimate_frostman_constant(
    mu: PointMassMeasure,
    s: float,
    n_centers: int = 256,
    radii=None,
    seed: int = 0,
    ceiling: float = 1e4,
    max_atom_centers: int = 20000,
) -> FrostmanReport:
    """Largest ``mu(B(x, r)) / r^s`` over atom and random centers and the given radii.

    This is a lower bound for the true supremum. Radii default to a geometric
    ladder from four atom spacings up to 2.
    """
    if s <= 0:
        raise ValueError("exponent s must be positive")
    if radii is None:
        floor = 4 * mu.atom_spacing() or 1e-3
        radii = radius_ladder(floor)
    radii = np.asarray(radii, float)
    if radii.size == 0:
        raise ValueError("empty radii list")
    if np.any(radii <= 0) or np.any(radii > 2 + 1e-12):
        raise ValueError("radii must lie in (0, 2]")
    rng = substream(seed, "frostman-centers")
    atoms = mu.points
    if atoms.shape[0] > max_atom_centers:
        atoms = atoms[rng.choice(atoms.shape[0], max_atom_centers, replace=False)]
    lo, hi = mu.points.min(axis=0), mu.points.max(axis=0)
    randoms = lo + (hi - lo) * rng.random((n_centers, mu.ambient_dim))
    centers = np.vstack([atoms, randoms])
    masses = ball_masses(mu, centers, radii)
    ratios = masses / radii[None, :] ** s
    i, j = np.unravel_index(np.argmax(ratios), ratios.shape)
    K = float(ratios[i, j])
    return FrostmanReport(
        exponent_s=float(s),
        constant_K=K,
        witness_ball=(centers[i].copy(), float(radii[j])),
        radii_scanned=radii,
        centers_scanned=centers,
        diverged=K > ceiling,
    )


@dataclass(frozen=True)
class Renormalization:
    measure: PointMassMeasure
    center: np.ndarray
    radius: float
    restricted: PointMassMeasure


def renormalize_frame(
    mu: PointMassMeasure,
    s: float,
    report: FrostmanReport | None = None,
    tau: float = 0.1,
    verify: bool = True,
    seed: int = 0,
) -> Renormalization:
    """Zoom into a heavy ball so the result has Frostman constant about 4.

    The frame is the largest scanned ball ``Q = B(v, rho)`` with
    ``mu(Q) >= K rho^s / 2``. The restriction of ``mu`` to ``Q`` is pushed
    onto the unit ball by ``x -> (x - v) / rho`` and renormalized.
    """
    if report is None:
        report = estimate_frostman_constant(mu, s, seed=seed)
    K = report.constant_K
    masses = ball_masses(mu, report.centers_scanned, report.radii_scanned)
    ok = masses >= 0.5 * K * report.radii_scanned[None, :] ** s * (1 - 1e-12)
    if not ok.any():
        raise NoWitnessError("no scanned ball carries half the reported constant")
    cols = np.nonzero(ok.any(axis=0))[0]
    j = cols[-1]
    i = int(np.argmax(np.where(ok[:, j], masses[:, j], -1.0)))
    v = report.centers_scanned[i]
    rho = float(report.radii_scanned[j])

    inside = np.linalg.norm(mu.points - v, axis=1) <= rho
    w = mu.weights[inside]
    restricted = PointMassMeasure(mu.points[inside], w / w.sum(), mu.dimension_s)
    pts = (restricted.points - v) / rho
    out = PointMassMeasure(pts, restricted.weights, mu.dimension_s)

    if verify:
        radii = report.radii_scanned / rho
        radii = radii[radii <= 2.0]
        if radii.size:
            check = estimate_frostman_constant(out, s, radii=radii, seed=seed + 1)
            if check.constant_K > 4 * (1 + tau):
                raise InvariantViolation(
                    f"renormalized constant {check.constant_K:.4g} exceeds {4 * (1 + tau):.4g}"
                )
    return Renormalization(out, v.copy(), rho, restricted)


def renormalize(mu: PointMassMeasure, s: float, report: FrostmanReport | None = None, **kw) -> PointMassMeasure:
    return renormalize_frame(mu, s, report, **kw).measure
