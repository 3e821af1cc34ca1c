"""Experiment configuration: YAML schema, defaults, validation.

One document describes one run.  Parsing is strict: unknown keys are
errors (with a best-guess suggestion), every validation message carries
the dotted path of the offending field, and the seed is mandatory so no
run ever depends on the wall clock.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .core import KacParams, ThermostatSpec
from .fourier import SolverConfig

__all__ = [
    "ConfigError",
    "EXPERIMENTS",
    "ExperimentConfig",
    "defaults_document",
    "load_config",
    "parse_config",
]

EXPERIMENTS = (
    "moments",
    "steady_state",
    "gtw_decay",
    "t1_decay",
    "coupling_w2",
    "tensorization",
    "marginal_chaos",
)

# the authoritative defaults table; `kacbath defaults` prints exactly this
DEFAULTS = {
    "params": {"n": 10, "lambda": 1.0, "mu": 1.0},
    "thermostat": {"kind": "gaussian", "sigma": 1.0},
    "solver": {
        "nodes": 65,
        "radius": None,  # null -> radius suited to the thermostat
        "n_theta": 128,
        "dt": 0.05,
        "picard_tol": 1.0e-8,
        "picard_max_iter": 400,
    },
    "replicas": 10_000,
    "t_end": 8.0,
    "record_times": None,  # null -> experiment-specific schedule
    "output_dir": "runs",
}

_THERMOSTAT_KEYS = {
    "gaussian": ("sigma",),
    "uniform": ("half_width",),
    "rademacher": ("scale",),
    "two_point": ("a", "b"),
    "dirac_zero": (),
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the field path."""


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated run description."""

    experiment: str
    seed: int
    params: KacParams
    thermostat: ThermostatSpec
    solver: SolverConfig
    nodes: int
    radius: Optional[float]
    replicas: int
    t_end: float
    record_times: Optional[np.ndarray]
    output_dir: str
    raw: dict = field(repr=False)


def defaults_document() -> str:
    """The defaults table as a YAML document (what `defaults` prints)."""
    doc = {"experiment": "<one of: " + ", ".join(EXPERIMENTS) + ">",
           "seed": "<required>"}
    doc.update(DEFAULTS)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate one YAML experiment document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not a valid YAML document: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("the document must be a mapping of keys to values")

    top_keys = ("experiment", "seed", "params", "thermostat", "solver",
                "replicas", "t_end", "record_times", "output_dir")
    _check_keys(doc, top_keys, path="")

    experiment = _required(doc, "experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"experiment: unknown experiment {experiment!r}"
            + _suggest(str(experiment), EXPERIMENTS)
        )
    seed = _non_negative_int(_required(doc, "seed"), "seed")

    params = _parse_params(doc.get("params"))
    thermostat = _parse_thermostat(doc.get("thermostat"))
    solver, nodes, radius = _parse_solver(doc.get("solver"))
    replicas = _non_negative_int(
        doc.get("replicas", DEFAULTS["replicas"]), "replicas"
    )
    if replicas < 1:
        raise ConfigError("replicas: must be >= 1")
    t_end = _finite_number(doc.get("t_end", DEFAULTS["t_end"]), "t_end")
    if not t_end > 0.0:
        raise ConfigError("t_end: must be > 0")
    record_times = _parse_record_times(doc.get("record_times"), t_end)
    output_dir = doc.get("output_dir", DEFAULTS["output_dir"])
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir: must be a nonempty string")

    return ExperimentConfig(
        experiment=experiment,
        seed=seed,
        params=params,
        thermostat=thermostat,
        solver=solver,
        nodes=nodes,
        radius=radius,
        replicas=replicas,
        t_end=t_end,
        record_times=record_times,
        output_dir=output_dir,
        raw=doc,
    )


def _parse_params(section) -> KacParams:
    d = dict(DEFAULTS["params"])
    d.update(_section(section, "params", ("n", "lambda", "mu")))
    n = _non_negative_int(d["n"], "params.n")
    # every experiment here involves pair interactions or tensor grids
    if n < 2:
        raise ConfigError("params.n: must be >= 2 for these experiments")
    lam = _finite_number(d["lambda"], "params.lambda")
    mu = _finite_number(d["mu"], "params.mu")
    if lam < 0.0:
        raise ConfigError("params.lambda: must be >= 0")
    if mu < 0.0:
        raise ConfigError("params.mu: must be >= 0")
    try:
        return KacParams(n_particles=n, lam=lam, mu=mu)
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from exc


def _parse_thermostat(section) -> ThermostatSpec:
    given = {} if section is None else section
    if not isinstance(given, dict):
        raise ConfigError("thermostat: must be a mapping")
    kind = given.get("kind", DEFAULTS["thermostat"]["kind"])
    if kind not in _THERMOSTAT_KEYS:
        raise ConfigError(
            f"thermostat.kind: unknown kind {kind!r}"
            + _suggest(str(kind), tuple(_THERMOSTAT_KEYS))
        )
    allowed = ("kind",) + _THERMOSTAT_KEYS[kind]
    _check_keys(given, allowed, path="thermostat.")
    args = {
        k: _finite_number(v, f"thermostat.{k}")
        for k, v in given.items()
        if k != "kind"
    }
    if kind == "two_point" and set(args) != {"a", "b"}:
        raise ConfigError("thermostat: two_point requires both a and b")
    try:
        return getattr(ThermostatSpec, kind)(**args)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"thermostat: {exc}") from exc


def _parse_solver(section):
    d = dict(DEFAULTS["solver"])
    d.update(_section(section, "solver", tuple(d)))
    nodes = _non_negative_int(d["nodes"], "solver.nodes")
    if nodes < 33 or nodes % 2 == 0:
        raise ConfigError("solver.nodes: must be odd and >= 33")
    radius = d["radius"]
    if radius is not None:
        radius = _finite_number(radius, "solver.radius")
        if not radius > 0.0:
            raise ConfigError("solver.radius: must be > 0")
    try:
        solver = SolverConfig(
            n_theta=_non_negative_int(d["n_theta"], "solver.n_theta"),
            picard_tol=_finite_number(d["picard_tol"], "solver.picard_tol"),
            picard_max_iter=_non_negative_int(
                d["picard_max_iter"], "solver.picard_max_iter"
            ),
            dt=_finite_number(d["dt"], "solver.dt"),
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc
    return solver, nodes, radius


def _parse_record_times(value, t_end):
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError("record_times: must be a nonempty list of times")
    times = np.array(
        [_finite_number(v, f"record_times[{i}]") for i, v in enumerate(value)]
    )
    if np.any(np.diff(times) <= 0.0) or times[0] < 0.0:
        raise ConfigError("record_times: must be strictly increasing and >= 0")
    if times[-1] > t_end:
        raise ConfigError("record_times: last entry exceeds t_end")
    return times


def _section(section, name, allowed) -> dict:
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(f"{name}: must be a mapping")
    _check_keys(section, allowed, path=name + ".")
    return section


def _check_keys(given: dict, allowed, path: str):
    for key in given:
        if key not in allowed:
            raise ConfigError(
                f"{path}{key}: unknown key" + _suggest(str(key), allowed)
            )


def _suggest(key: str, allowed) -> str:
    close = difflib.get_close_matches(key, allowed, n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


def _required(doc: dict, key: str):
    if key not in doc:
        raise ConfigError(f"{key}: required key is missing")
    return doc[key]


def _non_negative_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: must be an integer")
    if value < 0:
        raise ConfigError(f"{path}: must be >= 0")
    return int(value)


def _finite_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: must be a number")
    out = float(value)
    if not np.isfinite(out):
        raise ConfigError(f"{path}: must be finite")
    return out
