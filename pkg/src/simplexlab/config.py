"""Experiment configuration: ``key = value`` files with section headers.

Every key is typed and has a default; unknown sections or keys are
rejected. ``ExperimentConfig.resolved()`` is the fully expanded config that
gets echoed into each run's summary.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("gen-measure", "frostman", "mollify", "estimate", "telescope", "lambda-scan", "spectral", "omega-verify",
         "search")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _points(text: str) -> list[list[float]]:
    """``"0,0; 1,0; 0,1"`` -> rows."""
    return [[float(c) for c in row.split(",")] for row in text.split(";") if row.strip()]


def _edges(text: str) -> list[tuple[int, int]]:
    """``"0-1; 1-2"`` -> pairs."""
    out = []
    for item in text.replace(",", ";").split(";"):
        if item.strip():
            a, b = item.split("-")
            out.append((int(a), int(b)))
    return out


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float(text: str) -> float:
    return float(text)


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "experiment": {
        "kind": (str, None),
        "seed": (int, 0),
        "threads": (int, 0),
        "out": (str, "out"),
        "plot": (_bool, False),
    },
    "measure": {
        "source": (str, "sierpinski"),
        "depth": (int, 6),
        "ambient_dim": (int, 2),
        "offset": (_floats, []),
        "path": (str, ""),
        "dimension_s": (_float, math.nan),
        "renormalize": (_bool, False),
    },
    "mollify": {
        "epsilon": (_float, 0.0625),
        "epsilons": (_floats, []),
        "halfwidth": (_float, 2.0),
        "points": (int, 256),
        "bump_radius": (_float, 0.5),
        "truncation_c": (_float, 0.25),
    },
    "shape": {
        "type": (str, "equilateral"),
        "vertices": (_points, []),
        "edges": (_edges, []),
        "side": (_float, 1.0),
        "n_vertices": (int, 3),
        "ambient_dim": (int, 2),
        "eta": (_float, math.inf),
        "order": (_ints, []),
    },
    "estimate": {
        "lambdas": (_floats, [0.3]),
        "n_samples": (int, 100_000),
        "x_sampler": (str, "uniform"),
        "chunk": (int, 65536),
    },
    "telescope": {
        "lam": (_float, 0.3),
        "epsilons": (_floats, [0.125, 0.0625, 0.03125, 0.015625]),
    },
    "frostman": {
        "exponent_s": (_float, math.nan),
        "n_centers": (int, 256),
    },
    "spectral": {
        "epsilon": (_float, 0.25),
        "max_frequency": (_float, 4.0),
        "spacing": (_float, 0.0),
        "lam": (_float, 1.0),
        "xi_norms": (_floats, []),
        "n_chains": (int, 100_000),
    },
    "omega": {
        "centers": (_points, []),
        "sq_radii": (_floats, []),
        "level": (int, 4),
        "tolerance": (_float, 1e-4),
    },
    "search": {
        "cloud": (str, ""),
        "lam_min": (_float, 0.1),
        "lam_max": (_float, 0.5),
        "tolerance": (_float, 1e-9),
        "budget": (int, 100),
    },
}

POSITIVE = {
    ("mollify", "epsilon"), ("mollify", "halfwidth"), ("mollify", "points"), ("mollify", "bump_radius"),
    ("shape", "side"), ("shape", "eta"), ("estimate", "n_samples"), ("estimate", "chunk"), ("telescope", "lam"),
    ("frostman", "n_centers"), ("spectral", "epsilon"), ("spectral", "max_frequency"), ("spectral", "n_chains"),
    ("omega", "level"), ("omega", "tolerance"), ("search", "lam_min"), ("search", "lam_max"),
    ("search", "tolerance"), ("search", "budget"), ("measure", "depth"), ("measure", "ambient_dim"),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        section, name = key.split(".")
        return self.values[section][name]

    @property
    def seed(self) -> int:
        return self["experiment.seed"]

    def resolved(self) -> dict:
        def plain(v):
            if isinstance(v, float) and not math.isfinite(v):
                return repr(v)
            if isinstance(v, (list, tuple)):
                return [plain(x) for x in v]
            return v

        return {sec: {k: plain(v) for k, v in items.items()} for sec, items in self.values.items()}


def parse_config(text: str = "", overrides: dict[str, str] | None = None, kind: str | None = None) -> ExperimentConfig:
    """Parse config text with ``section.key`` overrides applied on top; the result is validated."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raw = {sec: dict(parser[sec]) for sec in parser.sections()}
    for key, val in (overrides or {}).items():
        if "." not in key:
            raise ConfigError(f"override {key!r} must look like section.key")
        sec, name = key.split(".", 1)
        raw.setdefault(sec, {})[name] = val

    values = {}
    for sec, items in raw.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for name in items:
            if name not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{name}")
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for name, (conv, default) in keys.items():
            text = raw.get(sec, {}).get(name)
            if text is None:
                values[sec][name] = list(default) if isinstance(default, list) else default
                continue
            try:
                values[sec][name] = conv(text)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {sec}.{name}: {text!r} ({exc})") from None

    file_kind = values["experiment"]["kind"]
    if kind is not None and file_kind is not None and file_kind != kind:
        raise ConfigError(f"config is for {file_kind!r}, not {kind!r}")
    kind = kind or file_kind
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    values["experiment"]["kind"] = kind
    _check_ranges(values)
    return ExperimentConfig(kind, values)


def load_config(path, overrides=None, kind=None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, overrides, kind)


def _check_ranges(values: dict) -> None:
    for sec, name in POSITIVE:
        v = values[sec][name]
        if not (isinstance(v, (int, float)) and v > 0):
            raise ConfigError(f"{sec}.{name} must be positive (got {v!r})")
    for sec, name in (("mollify", "epsilons"), ("telescope", "epsilons"), ("estimate", "lambdas"),
                      ("spectral", "xi_norms"), ("omega", "sq_radii")):
        if any(not (x > 0) for x in values[sec][name]):
            raise ConfigError(f"{sec}.{name} must all be positive")
    if values["experiment"]["seed"] < 0:
        raise ConfigError("experiment.seed must be nonnegative")
    if values["experiment"]["threads"] < 0:
        raise ConfigError("experiment.threads must be nonnegative")
    if values["search"]["lam_min"] > values["search"]["lam_max"]:
        raise ConfigError("search.lam_min exceeds search.lam_max")
    if values["estimate"]["x_sampler"] not in ("uniform", "density"):
        raise ConfigError("estimate.x_sampler must be 'uniform' or 'density'")
    if values["spectral"]["spacing"] < 0:
        raise ConfigError("spectral.spacing must be nonnegative (0 picks the default)")
