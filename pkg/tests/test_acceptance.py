"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import itertools
import math
import time
import warnings

import numpy as np
import pytest

from conftest import record
from oracles import triangle_count_2d
from simplexlab.cli import main as cli_main
from simplexlab.errors import ResolutionWarning
from simplexlab.estimators import (decay_regression, estimate_T_graph, estimate_T_simplex, chain_normalization,
                                   predicted_exponent, superlevel_constant, superlevel_set, telescoping_pair)
from simplexlab.euclid_config import (PolynomialVariety, Simplex, admissible_charts, chart_integrate, gram_weight,
                                      intersect_spheres)
from simplexlab.graph_config import DistanceGraph
from simplexlab.measure_forge import (PointMassMeasure, build_cantor_dust, estimate_frostman_constant, full_cube_ifs,
                                      middle_thirds_ifs, renormalize, sierpinski_ifs)
from simplexlab.mollify import MollifierSpec, mollify, sup_norm_scaling, truncate
from simplexlab.patternscan import find_similar_copy, verify_match
from simplexlab.sampler import fubini_check, rotation_invariance_check
from simplexlab.spectral import I_lambda_estimate, I_lambda_slope, spectral_identity_check

S_SIERPINSKI = math.log(3) / math.log(2)
TELESCOPE_EPS = [2.0**-3, 2.0**-4, 2.0**-5]
FIT_EPS = TELESCOPE_EPS + [2.0**-6]


def random_rotation(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def sphere_instances(n, seed):
    """Random sphere-intersection slices cycling through d in {3,4,5}, m in {1..d-1}."""
    rng = np.random.default_rng(seed)
    combos = [(d, m) for d in (3, 4, 5) for m in range(1, d)]
    out = []
    for i in range(n):
        d, m = combos[i % len(combos)]
        c = rng.standard_normal((m, d))
        x = rng.standard_normal(d)
        out.append((c, np.sum((x - c) ** 2, axis=1), x))
    return out


@pytest.fixture(scope="module")
def sierpinski8():
    return build_cantor_dust(sierpinski_ifs(8))


@pytest.fixture(scope="module")
def sierpinski_grids(sierpinski8):
    eps = sorted(set(FIT_EPS) | {2 * e for e in FIT_EPS})
    return {e: mollify(sierpinski8, MollifierSpec(e), 2.5, 1280) for e in eps}


def test_criterion_01_weight_formula():
    start = time.perf_counter()
    worst = 0.0
    for c, t, x in sphere_instances(20, seed=101):
        sl = intersect_spheres(c, t)
        exact = gram_weight(x, c).weight * sl.area()
        val = chart_integrate(PolynomialVariety.from_spheres(c, t), lambda X: np.ones(len(X)), level=5).value
        worst = max(worst, abs(val - exact) / exact)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and elapsed < 60
    record(1, "chart integral of 1 equals c_T x sphere area", ok, f"max rel err {worst:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_02_chart_independence():
    worst, used = 0.0, 0
    rng = np.random.default_rng(202)
    for c, t, x in sphere_instances(20, seed=101):
        var = PolynomialVariety.from_spheres(c, t)
        charts = admissible_charts(var)
        if len(charts) < 2:
            continue
        a = rng.standard_normal(c.shape[1])
        g = lambda X: np.exp(0.3 * X @ a)
        v1 = chart_integrate(var, g, coordinates=charts[0], level=5).value
        v2 = chart_integrate(var, g, coordinates=charts[-1], level=5).value
        worst = max(worst, abs(v1 - v2) / abs(v2))
        used += 1
        if used == 10:
            break
    ok = used == 10 and worst <= 1e-6
    record(2, "two admissible charts give the same integral", ok, f"{used} instances, max rel gap {worst:.1e}")
    assert ok


def test_criterion_03_fubini():
    start = time.perf_counter()
    path = DistanceGraph.path([[0, 0, 0], [1, 0, 0], [1, 1, 0.3]])
    tri = DistanceGraph.complete(Simplex.equilateral_triangle(ambient_dim=3))
    g = lambda P: 1 + P[:, 1, 0] * P[:, 2, 2] + P[:, 2, 1]
    zs = []
    for graph, eta in ((path, math.inf), (path, 0.5), (tri, math.inf), (tri, 0.5)):
        zs.append(fubini_check(graph, 2, g, 10**6, eta=eta, seed=303).z)
    elapsed = time.perf_counter() - start
    ok = max(abs(z) for z in zs) <= 3 and elapsed < 120
    record(3, "nested and joint Monte Carlo agree", ok, f"z = {', '.join(f'{z:.2f}' for z in zs)}; {elapsed:.1f}s")
    assert ok


def test_criterion_04_rotation_invariance():
    rng = np.random.default_rng(404)
    shapes = [Simplex.equilateral_triangle(), Simplex.regular(4)]
    zs = []
    for s in shapes:
        last = s.n_vertices - 1
        stats = [lambda P: P[:, 1, 0] ** 2, lambda P, j=last: P[:, j, 0] * P[:, j, 1]]
        for i in range(5):
            rep = rotation_invariance_check(s, random_rotation(rng, s.ambient_dim), stats, 100_000, seed=4000 + i)
            zs.extend(c.z for c in rep.comparisons)
    worst = max(abs(z) for z in zs)
    ok = worst <= 3
    record(4, "chain moments invariant under 5 rotations (k = 2, 3)", ok, f"{len(zs)} z-scores, max |z| {worst:.2f}")
    assert ok


def test_criterion_05_renormalization():
    results = []
    for mu in (build_cantor_dust(middle_thirds_ifs(8)), build_cantor_dust(sierpinski_ifs(6))):
        out = renormalize(mu, mu.dimension_s)
        results.append(estimate_frostman_constant(out, mu.dimension_s, seed=5).constant_K)
    ok = max(results) <= 4.4
    record(5, "renormalized Frostman constant at most 4.4", ok, f"K = {', '.join(f'{k:.3f}' for k in results)}")
    assert ok


def test_criterion_06_sup_norm_scaling():
    start = time.perf_counter()
    eps = [2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6]
    uniform = sup_norm_scaling(build_cantor_dust(full_cube_ifs(2, 8)), 2.0, eps, halfwidth=2.0)
    dust = sup_norm_scaling(build_cantor_dust(sierpinski_ifs(8)), S_SIERPINSKI, eps, halfwidth=2.0)
    elapsed = time.perf_counter() - start
    ok = abs(uniform.slope - 0.0) <= 0.15 and abs(dust.slope - (S_SIERPINSKI - 2)) <= 0.15 and elapsed < 300
    record(6, "sup-norm slope matches s - k", ok,
           f"uniform {uniform.slope:.3f} (0), dust {dust.slope:.3f} ({S_SIERPINSKI - 2:.3f}); {elapsed:.1f}s")
    assert ok


def test_criterion_07_spectral_identity():
    two = PointMassMeasure(np.array([[-0.5, 0.0], [0.5, 0.0]]), np.array([0.5, 0.5]))
    gaps = [spectral_identity_check(two, 0.25).relative_gap,
            spectral_identity_check(build_cantor_dust(sierpinski_ifs(6)), 2.0**-4).relative_gap]
    ok = max(gaps) <= 0.01
    record(7, "spectral identity within 1%", ok, f"gaps {gaps[0]:.1e} (two atoms), {gaps[1]:.1e} (dust)")
    assert ok


def test_criterion_08_I_lambda_decay():
    start = time.perf_counter()
    norms = 2.0 ** np.arange(7)
    ests = I_lambda_estimate(Simplex.equilateral_triangle(ambient_dim=3), 1.0, np.outer(norms, [0, 0, 1.0]),
                             100_000, seed=808)
    fit = I_lambda_slope(ests)
    elapsed = time.perf_counter() - start
    ok = fit.slope <= -0.8 and elapsed < 120
    record(8, "I_lambda log-log slope at most -0.8", ok, f"slope {fit.slope:.3f}; {elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def telescope_results(sierpinski_grids):
    tri = Simplex.equilateral_triangle()
    return {e: telescoping_pair(sierpinski_grids[2 * e], sierpinski_grids[e], tri, 0.3, 1_600_000, seed=1,
                                x_sampler="density") for e in FIT_EPS}


def test_criterion_09_telescoping_decay(telescope_results):
    res = [telescope_results[e] for e in TELESCOPE_EPS]
    d = [r.abs_difference for r in res]
    se = [r.std_error for r in res]
    positive = all(di > 3 * si for di, si in zip(d, se))
    ordered = all(d[i] - d[i + 1] > 3 * math.hypot(se[i], se[i + 1]) for i in range(len(d) - 1))
    fit = decay_regression([(e, telescope_results[e].abs_difference) for e in FIT_EPS], 2, S_SIERPINSKI)
    ok = positive and ordered and fit.slope >= 0
    detail = ", ".join(f"{di:.4f}+-{si:.4f}" for di, si in zip(d, se))
    record(9, "telescoping differences positive and decreasing", ok,
           f"|dT| {detail}; slope {fit.slope:.3f}, predicted {predicted_exponent(2, S_SIERPINSKI):.3f}")
    assert ok


def test_criterion_10_estimator_cross_validation():
    tri = Simplex.equilateral_triangle()
    mu = build_cantor_dust(full_cube_ifs(2, 5, offset=[-0.5, -0.5]))
    grid = mollify(mu, MollifierSpec(0.125), 2.0, 128)
    a = estimate_T_simplex(grid, tri, 0.4, 100_000, seed=10, tag="cross")
    b = estimate_T_graph(grid, DistanceGraph.complete(tri), 0.4, n_samples=100_000, seed=10, tag="cross")
    norm = chain_normalization(DistanceGraph.complete(tri))
    z_graph = (b.value / norm - a.value) / a.std_error
    est = estimate_T_simplex(grid, tri, 0.5, 200_000, seed=11)
    oracle = triangle_count_2d(grid, 0.5)
    z_oracle = (est.value - oracle) / est.std_error
    ok = abs(z_graph) <= 3 and abs(z_oracle) <= 3
    record(10, "simplex vs graph and vs dense quadrature", ok, f"z {z_graph:.2e} (graph), {z_oracle:.2f} (oracle)")
    assert ok


def test_criterion_11_superlevel(sierpinski8, sierpinski_grids):
    eps = [2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6]
    cases = [("sierpinski", sierpinski8, S_SIERPINSKI, {e: sierpinski_grids[e] for e in eps})]
    uniform = build_cantor_dust(full_cube_ifs(2, 8))
    cases.append(("uniform", uniform, 2.0, {e: mollify(uniform, MollifierSpec(e), 2.0, 1024) for e in eps}))
    dust1 = build_cantor_dust(middle_thirds_ifs(8))
    cases.append(("middle thirds", dust1, dust1.dimension_s, {e: mollify(dust1, MollifierSpec(e), 2.0, 4096)
                                                              for e in eps}))
    worst, checked = math.inf, 0
    for _, mu, s, grids in cases:
        truncated = [truncate(grids[e], mu, MollifierSpec(e)) for e in eps]
        c = superlevel_constant(truncated, s)
        for e, g in zip(eps, truncated):
            sl = superlevel_set(g, s, e, c=c)
            worst = min(worst, sl.measure - sl.alpha / 2)
            checked += 1
    ok = worst >= -1e-3
    record(11, "|A_eps| >= alpha/2 on every acceptance measure", ok,
           f"{checked} cases, min |A| - alpha/2 = {worst:.2e}")
    assert ok


def test_criterion_12_search_soundness():
    rng = np.random.default_rng(1212)
    found, verified, total = 0, True, 0
    for _ in range(10):
        V = Simplex(rng.normal(size=(3, 2)))
        th = rng.uniform(0, 2 * np.pi)
        U = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        v = V.vertices - V.vertices[0]
        lam = rng.uniform(0.1, 0.3) / np.linalg.norm(v[1])
        planted = rng.uniform(0.3, 0.7, 2) + lam * v @ U.T
        cloud = np.vstack([rng.uniform(0, 1, (10**4 - 3, 2)), planted])[rng.permutation(10**4)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResolutionWarning)
            matches = find_similar_copy(cloud, V, (0.99 * lam, 1.01 * lam), 1e-9, budget=10)
        found += any(np.allclose(m.vertices, planted, atol=1e-12) and m.residual <= 1e-9 for m in matches)
        verified &= all(verify_match(m, V) for m in matches)
        total += len(matches)
    ok = found == 10 and verified
    record(12, "planted copies recovered and re-verified", ok, f"{found}/10 found, {total} matches verified")
    assert ok


ACCEPTANCE_CONFIGS = {
    "gen-measure": ["--set", "measure.depth=6"],
    "frostman": ["--set", "measure.depth=6", "--set", "measure.renormalize=yes"],
    "mollify": ["--set", "measure.depth=6", "--set", "mollify.epsilons=0.125,0.0625,0.03125",
                "--set", "mollify.points=512"],
    "estimate": ["--set", "measure.depth=6", "--set", "mollify.halfwidth=2.5", "--set", "mollify.points=320",
                 "--set", "estimate.lambdas=0.2,0.3", "--set", "estimate.n_samples=100000"],
    "lambda-scan": ["--set", "measure.depth=6", "--set", "mollify.halfwidth=2.5", "--set", "mollify.points=320",
                    "--set", "estimate.lambdas=0.1,0.2,0.3,0.4", "--set", "estimate.n_samples=50000"],
    "telescope": ["--set", "measure.depth=7", "--set", "mollify.halfwidth=2.5", "--set", "mollify.points=640",
                  "--set", "telescope.epsilons=0.125,0.0625,0.03125", "--set", "estimate.n_samples=100000",
                  "--set", "estimate.x_sampler=density"],
    "spectral": ["--set", "measure.depth=4", "--set", "spectral.xi_norms=1,2,4,8,16,32,64",
                 "--set", "shape.ambient_dim=3"],
    "omega-verify": [],
    "search": ["--set", "measure.depth=5", "--set", "shape.type=simplex", "--set", "shape.vertices=0,0;1,0;0,1",
               "--set", "search.lam_min=0.1", "--set", "search.lam_max=0.3", "--set", "search.tolerance=1e-9"],
}


def test_criterion_13_determinism(tmp_path):
    outputs = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        for run, threads in itertools.product((0, 1), (1, 8)):
            for kind, args in ACCEPTANCE_CONFIGS.items():
                out = tmp_path / f"{kind}-{threads}-{run}"
                code = cli_main([kind, *args, "--seed", "13", "--threads", str(threads), "--out", str(out)])
                assert code == 0, kind
                for f in sorted(out.glob("*.csv")):
                    outputs.setdefault((kind, f.name), []).append(f.read_bytes())
    mismatched = [k for k, blobs in outputs.items() if len(blobs) != 4 or len(set(blobs)) != 1]
    ok = not mismatched
    record(13, "CSV outputs bitwise identical across runs and 1 vs 8 workers", ok,
           f"{len(outputs)} CSV files x 4 runs" + (f"; differing: {mismatched}" if mismatched else ""))
    assert ok
