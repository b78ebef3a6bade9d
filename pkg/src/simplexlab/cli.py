"""Command-line front end.

    simplexlab KIND [CONFIG] [--set section.key=value ...] [--seed N] [--threads N] [--out DIR]
    simplexlab run CONFIG ...

Exit codes: 0 success, 2 invalid input, 3 a numerical invariant failed.
Outputs are staged and only copied to ``--out`` when the run succeeds.
"""
from __future__ import annotations

import argparse
import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import KINDS, ConfigError, ExperimentConfig, load_config, parse_config
from .errors import InvariantViolation
from .estimators import (Shape, decay_regression, estimate_T, lambda_scan, predicted_exponent,
                         telescoping_pair, write_estimates_csv)
from .euclid_config import PolynomialVariety, Simplex, chart_integrate, gram_weight, intersect_spheres
from .graph_config import DistanceGraph
from .measure_forge import (PointMassMeasure, build_cantor_dust, estimate_frostman_constant, full_cube_ifs,
                            middle_thirds_ifs, renormalize_frame, sierpinski_ifs)
from .mollify import MollifierSpec, loglog_slope, mollify
from .patternscan import find_similar_copy, write_matches_csv
from .spectral import I_lambda_estimate, I_lambda_slope, measure_spectrum, spectral_identity_check
from .svg import finite_or_none, line_chart


class OmegaMismatch(InvariantViolation):
    pass


# --------------------------------------------------------------------------
# building inputs


def build_measure(cfg: ExperimentConfig) -> PointMassMeasure:
    m = cfg.values["measure"]
    offset = m["offset"] or None
    src = m["source"]
    if src == "sierpinski":
        mu = build_cantor_dust(sierpinski_ifs(m["depth"], offset))
    elif src == "middle_thirds":
        mu = build_cantor_dust(middle_thirds_ifs(m["depth"], offset[0] if offset else 0.0))
    elif src == "full_cube":
        mu = build_cantor_dust(full_cube_ifs(m["ambient_dim"], m["depth"], offset))
    elif src == "csv":
        if not m["path"]:
            raise ConfigError("measure.path is required for source = csv")
        s = None if math.isnan(m["dimension_s"]) else m["dimension_s"]
        mu = PointMassMeasure.from_csv(m["path"], dimension_s=s)
    else:
        raise ConfigError(f"unknown measure source {src!r}")
    if not math.isnan(m["dimension_s"]) and src != "csv":
        mu = PointMassMeasure(mu.points, mu.weights, m["dimension_s"])
    return mu


def build_shape(cfg: ExperimentConfig):
    s = cfg.values["shape"]
    kind = s["type"]
    if kind == "equilateral":
        return Simplex.equilateral_triangle(s["side"], s["ambient_dim"])
    if kind == "regular":
        return Simplex.regular(s["n_vertices"], s["side"], s["ambient_dim"])
    if not s["vertices"]:
        raise ConfigError(f"shape.vertices is required for shape.type = {kind}")
    v = np.array(s["vertices"], float)
    if kind == "simplex":
        return Simplex(v)
    if kind == "path":
        return DistanceGraph.path(v)
    if kind == "complete":
        return DistanceGraph.complete(Simplex(v))
    if kind == "graph":
        if not s["edges"]:
            raise ConfigError("shape.edges is required for shape.type = graph")
        return DistanceGraph(v, tuple(s["edges"]))
    raise ConfigError(f"unknown shape type {kind!r}")


def _shape(cfg):
    obj = build_shape(cfg)
    s = cfg.values["shape"]
    if isinstance(obj, DistanceGraph):
        return Shape(graph=obj, eta=s["eta"], order=tuple(s["order"]) or None)
    return Shape(simplex=obj)


def _spec(cfg, epsilon):
    m = cfg.values["mollify"]
    return MollifierSpec(epsilon, m["bump_radius"], m["truncation_c"])


def _grid(cfg, mu, epsilon):
    m = cfg.values["mollify"]
    return mollify(mu, _spec(cfg, epsilon), m["halfwidth"], m["points"])


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if not isinstance(v, (int, np.integer)) else str(v) for v in row) + "\n")


def _plot(cfg, stage, name, series, **kw):
    if cfg["experiment.plot"]:
        (stage / name).write_text(line_chart(series, **kw))


# --------------------------------------------------------------------------
# runners: each writes into ``stage`` and returns (summary, report lines)


def run_gen_measure(cfg, stage, threads):
    mu = build_measure(cfg)
    mu.to_csv(stage / "measure.csv")
    return {"n_atoms": mu.n_atoms, "dimension_s": mu.dimension_s, "diameter": mu.diameter()}, \
        [f"wrote {mu.n_atoms} atoms"]


def run_frostman(cfg, stage, threads):
    mu = build_measure(cfg)
    f = cfg.values["frostman"]
    s = f["exponent_s"] if not math.isnan(f["exponent_s"]) else mu.dimension_s
    if s is None:
        raise ConfigError("frostman.exponent_s is required when the measure carries no dimension")
    rep = estimate_frostman_constant(mu, s, n_centers=f["n_centers"], seed=cfg.seed)
    rows = [("input", rep.constant_K)]
    summary = {"exponent_s": s, "constant_K": rep.constant_K, "diverged": rep.diverged}
    if cfg["measure.renormalize"]:
        ren = renormalize_frame(mu, s, rep, seed=cfg.seed)
        again = estimate_frostman_constant(ren.measure, s, n_centers=f["n_centers"], seed=cfg.seed)
        rows.append(("renormalized", again.constant_K))
        summary["renormalized_K"] = again.constant_K
        ren.measure.to_csv(stage / "renormalized.csv")
    with open(stage / "frostman.csv", "w") as fh:
        fh.write("stage,exponent_s,constant_K\n")
        for name, k in rows:
            fh.write(f"{name},{s!r},{k!r}\n")
    return summary, [f"Frostman constant {name}: {k:.6g}" for name, k in rows]


def run_mollify(cfg, stage, threads):
    mu = build_measure(cfg)
    eps = cfg["mollify.epsilons"] or [cfg["mollify.epsilon"]]
    rows = []
    for i, e in enumerate(eps):
        g = _grid(cfg, mu, e)
        g.to_binary(stage / f"mollified_{i}.bin")
        rows.append((e, g.sup(), g.mass()))
    _write_csv(stage / "sup_norm.csv", ["epsilon", "sup", "mass"], rows)
    summary = {"epsilons": eps}
    lines = [f"eps={e:g} sup={s:.6g} mass={m:.12f}" for e, s, m in rows]
    if len(eps) >= 2:
        slope, _ = loglog_slope([r[0] for r in rows], [r[1] for r in rows])
        summary["slope"] = slope
        if mu.dimension_s is not None:
            summary["expected_slope"] = mu.dimension_s - mu.ambient_dim
        lines.append(f"log-log slope {slope:.4f}")
    _plot(cfg, stage, "sup_norm.svg", {"sup": ([r[0] for r in rows], [r[1] for r in rows])},
          title="sup norm", xlabel="epsilon", ylabel="sup", logx=True, logy=True)
    return summary, lines


def run_estimate(cfg, stage, threads):
    mu, shape = build_measure(cfg), _shape(cfg)
    est = cfg.values["estimate"]
    grid = _grid(cfg, mu, cfg["mollify.epsilon"])
    out = [estimate_T(grid, shape, lam, est["n_samples"], seed=cfg.seed, threads=threads, tag=f"T:{i}",
                      chunk=est["chunk"], x_sampler=est["x_sampler"])
           for i, lam in enumerate(est["lambdas"])]
    write_estimates_csv(stage / "estimates.csv", out)
    return {"T": [e.value for e in out]}, [e.csv_row() for e in out]


def run_lambda_scan(cfg, stage, threads):
    mu, shape = build_measure(cfg), _shape(cfg)
    est = cfg.values["estimate"]
    grid = _grid(cfg, mu, cfg["mollify.epsilon"])
    scan = lambda_scan(grid, shape, est["lambdas"], est["n_samples"], seed=cfg.seed, threads=threads,
                       chunk=est["chunk"], x_sampler=est["x_sampler"])
    write_estimates_csv(stage / "lambda_scan.csv", scan.estimates)
    _plot(cfg, stage, "lambda_scan.svg", {"T": ([e.lam for e in scan.estimates], [e.value for e in scan.estimates])},
          title="lambda scan", xlabel="lambda", ylabel="T")
    return {"integral": scan.integral, "integral_se": scan.integral_se}, \
        [f"integral of lambda^1/2 T: {scan.integral:.6g} +- {scan.integral_se:.2g}"]


def run_telescope(cfg, stage, threads):
    mu, shape = build_measure(cfg), _shape(cfg)
    est, tel = cfg.values["estimate"], cfg.values["telescope"]
    eps = tel["epsilons"]
    grids = {}
    for e in sorted(set(eps) | {2 * e for e in eps}):
        grids[e] = _grid(cfg, mu, e)
    rows, pairs = [], []
    for e in eps:
        r = telescoping_pair(grids[2 * e], grids[e], shape, tel["lam"], est["n_samples"], seed=cfg.seed,
                             threads=threads, chunk=est["chunk"], x_sampler=est["x_sampler"])
        rows.append((e, r.coarse.value, r.fine.value, r.difference, r.std_error, est["n_samples"]))
        pairs.append((e, r.abs_difference))
    _write_csv(stage / "telescope.csv", ["epsilon", "T_coarse", "T_fine", "difference", "std_err", "n_samples"], rows)
    summary = {"rows": len(rows)}
    lines = [f"eps={r[0]:g} |dT|={abs(r[3]):.4g} +- {r[4]:.2g}" for r in rows]
    if len(pairs) >= 4 and mu.dimension_s is not None:
        fit = decay_regression(pairs, mu.ambient_dim, mu.dimension_s)
        summary.update(slope=fit.slope, ci=[fit.ci_low, fit.ci_high], predicted=fit.predicted)
        lines.append(f"fitted slope {fit.slope:.3f} [{fit.ci_low:.3f}, {fit.ci_high:.3f}], "
                     f"predicted {predicted_exponent(mu.ambient_dim, mu.dimension_s):.3f}")
    _plot(cfg, stage, "telescope.svg", {"|dT|": ([p[0] for p in pairs], [p[1] for p in pairs])},
          title="telescoping differences", xlabel="epsilon", ylabel="|dT|", logx=True, logy=True)
    return summary, lines


def run_spectral(cfg, stage, threads):
    mu = build_measure(cfg)
    sp = cfg.values["spectral"]
    diam = mu.diameter()
    spacing = sp["spacing"] or (1.0 / (4 * diam) if diam > 0 else 0.25)
    measure_spectrum(mu, sp["max_frequency"], spacing).to_csv(stage / "spectrum.csv")
    chk = spectral_identity_check(mu, sp["epsilon"], _spec(cfg, sp["epsilon"]))
    summary = {"frequency_side": chk.frequency_side, "measure_side": chk.measure_side, "relative_gap": chk.relative_gap}
    lines = [f"spectral identity: frequency side {chk.frequency_side:.8g}, measure side {chk.measure_side:.8g}, "
             f"relative gap {chk.relative_gap:.2e}"]
    if sp["xi_norms"]:
        shape = build_shape(cfg)
        if not isinstance(shape, Simplex):
            raise ConfigError("I_lambda needs a simplex shape")
        d = shape.ambient_dim
        direction = np.eye(d)[-1]
        ests = I_lambda_estimate(shape, sp["lam"], np.outer(sp["xi_norms"], direction), sp["n_chains"],
                                 seed=cfg.seed, threads=threads)
        _write_csv(stage / "i_lambda.csv", ["xi_norm", "I", "std_err", "n_samples"],
                   [(e.epsilon, e.value, e.std_error, e.n_samples) for e in ests])
        if len(ests) >= 2:
            fit = I_lambda_slope(ests)
            summary["I_lambda_slope"] = fit.slope
            lines.append(f"I_lambda slope {fit.slope:.3f} (bound exponent {fit.bound_exponent:g})")
        _plot(cfg, stage, "i_lambda.svg", {"I": ([e.epsilon for e in ests], [e.value for e in ests])},
              title="I_lambda", xlabel="|xi|", ylabel="I", logx=True, logy=True)
    return summary, lines


def run_omega_verify(cfg, stage, threads):
    om = cfg.values["omega"]
    centers = np.array(om["centers"] or [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], float)
    sq = np.array(om["sq_radii"] or [1.0] * len(centers), float)
    if len(sq) != len(centers):
        raise ConfigError("omega.sq_radii must have one entry per center")
    sl = intersect_spheres(centers, sq)
    x = sl.center + sl.radius * sl.plane_basis[0]
    closed = gram_weight(x, centers).weight * sl.area()
    res = chart_integrate(PolynomialVariety.from_spheres(centers, sq), lambda X: np.ones(len(X)), level=om["level"])
    gap = abs(res.value - closed) / closed
    _write_csv(stage / "omega.csv", ["chart_value", "chart_error", "closed_form", "relative_gap"],
               [(res.value, res.error, closed, gap)])
    line = f"weight formula agreement: chart {res.value:.12g} vs c_T * area {closed:.12g}, relative gap {gap:.2e} " \
           f"(tolerance {om['tolerance']:g})"
    if gap > om["tolerance"]:
        raise OmegaMismatch(line)
    return {"chart_value": res.value, "closed_form": closed, "relative_gap": gap}, [line]


def run_search(cfg, stage, threads):
    sr = cfg.values["search"]
    cloud = PointMassMeasure.from_csv(sr["cloud"]) if sr["cloud"] else build_measure(cfg)
    shape = build_shape(cfg)
    matches = find_similar_copy(cloud, shape, (sr["lam_min"], sr["lam_max"]), sr["tolerance"], sr["budget"])
    write_matches_csv(stage / "matches.csv", matches)
    best = matches[0].residual if matches else None
    return {"n_matches": len(matches), "best_residual": best}, [f"{len(matches)} matches"]


RUNNERS = {
    "gen-measure": run_gen_measure,
    "frostman": run_frostman,
    "mollify": run_mollify,
    "estimate": run_estimate,
    "telescope": run_telescope,
    "lambda-scan": run_lambda_scan,
    "spectral": run_spectral,
    "omega-verify": run_omega_verify,
    "search": run_search,
}


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return finite_or_none(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def execute(cfg: ExperimentConfig, out: Path, threads: int | None) -> list[str]:
    """Run one experiment; outputs land in ``out`` only if it succeeds."""
    with tempfile.TemporaryDirectory() as tmp:
        stage = Path(tmp)
        summary, lines = RUNNERS[cfg.kind](cfg, stage, threads)
        record = {"version": __version__, "kind": cfg.kind, "seed": cfg.seed, "config": cfg.resolved(),
                  "results": _jsonable(summary)}
        (stage / "summary.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
        out.mkdir(parents=True, exist_ok=True)
        for f in sorted(stage.iterdir()):
            shutil.copyfile(f, out / f.name)
    return lines


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (overrides experiment.seed)")
    common.add_argument("--threads", type=int, help="worker threads (default: $SIMPLEXLAB_THREADS or 1)")
    common.add_argument("--out", help="output directory (overrides experiment.out)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value")
    p = argparse.ArgumentParser(prog="simplexlab", description="Similar-copy experiments on fractal measures.")
    p.add_argument("--version", action="version", version=f"simplexlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run the experiment named in a config file")
    r.add_argument("config")
    for kind in KINDS:
        k = sub.add_parser(kind, parents=[common], help=f"run the {kind} experiment")
        k.add_argument("config", nargs="?")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        overrides = {}
        for item in args.set:
            key, sep, val = item.partition("=")
            if not sep:
                raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
            overrides[key.strip()] = val.strip()
        if args.seed is not None:
            overrides["experiment.seed"] = str(args.seed)
        if args.threads is not None:
            overrides["experiment.threads"] = str(args.threads)
        if args.out is not None:
            overrides["experiment.out"] = args.out
        kind = None if args.command == "run" else args.command
        if args.config:
            cfg = load_config(args.config, overrides, kind)
        else:
            cfg = parse_config("", overrides, kind)
        threads = cfg["experiment.threads"] or None
        lines = execute(cfg, Path(cfg["experiment.out"]), threads)
    except InvariantViolation as exc:
        print(f"simplexlab: invariant violated: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError, OSError) as exc:
        print(f"simplexlab: invalid input: {exc}", file=sys.stderr)
        return 2
    for line in lines:
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
