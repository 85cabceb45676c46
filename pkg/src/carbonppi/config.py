"""Scenario configuration files: a strict TOML schema with defaults.

Unknown keys are rejected so typos fail loudly; everything numeric is
validated through the model invariants on load.  ``write_config`` emits a
file that loads back to an identical configuration.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .errors import ParseError, ValidationError
from .market import MarketModel

DEFAULT_RATE = 0.01
DEFAULT_PROTECTION = 1.0
DEFAULT_WEALTH = 1.0

_MODEL_KEYS = {"k", "a", "b", "sigma", "r", "lambda", "beta", "sigma_y",
               "gamma0", "p0", "correlation"}
_SIM_KEYS = {"horizon", "dt", "paths", "seed", "modes", "v0",
             "protection_level", "jobs"}
_PREF_KEYS = {"deltas", "epsilons"}
_TOP_KEYS = {"model", "scenarios", "preferences", "simulation", "output"}
_OUTPUT_KEYS = {"directory"}


@dataclass
class ScenarioConfig:
    model: MarketModel
    scenarios: dict                    # name -> drift vector (np.ndarray)
    deltas: list
    epsilons: list
    horizon: float
    dt: float
    paths: int
    seed: int
    modes: list
    v0: float = DEFAULT_WEALTH
    protection_level: float = DEFAULT_PROTECTION
    jobs: int = 1
    output_dir: str = "out"

    def scenario_model(self, name: str) -> MarketModel:
        if name not in self.scenarios:
            raise ValidationError(f"unknown scenario {name!r}")
        return self.model.with_drift(self.scenarios[name])


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ValidationError(f"unknown keys in [{where}]: {sorted(unknown)}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ValidationError(f"missing key {key!r} in [{where}]")
    return section[key]


def parse_config(data: dict) -> ScenarioConfig:
    _reject_unknown(data, _TOP_KEYS, "top level")
    m = _require(data, "model", "top level")
    _reject_unknown(m, _MODEL_KEYS, "model")
    a = np.asarray(_require(m, "a", "model"), dtype=float)
    n = len(a)
    model = MarketModel(
        n=n,
        k=int(_require(m, "k", "model")),
        a=a,
        b=np.asarray(_require(m, "b", "model"), dtype=float),
        sigma=np.asarray(_require(m, "sigma", "model"), dtype=float),
        R=np.asarray(_require(m, "correlation", "model"), dtype=float),
        r=float(m.get("r", DEFAULT_RATE)),
        lam=float(_require(m, "lambda", "model")),
        beta=float(_require(m, "beta", "model")),
        sigma_y=float(_require(m, "sigma_y", "model")),
        gamma0=float(_require(m, "gamma0", "model")),
        p0=float(_require(m, "p0", "model")),
    )

    scen_section = data.get("scenarios", {})
    scenarios = {}
    for name, drift in scen_section.items():
        vec = np.asarray(drift, dtype=float)
        if vec.shape != (n,):
            raise ValidationError(f"scenario {name!r} drift must have {n} entries")
        scenarios[str(name)] = vec
    if not scenarios:
        scenarios = {"base": a.copy()}

    prefs = data.get("preferences", {})
    _reject_unknown(prefs, _PREF_KEYS, "preferences")
    deltas = [float(x) for x in prefs.get("deltas", [0.7, 1.0, 3.0])]
    epsilons = [float(x) for x in prefs.get("epsilons", [0.0, 1.0])]
    if any(d <= 0 for d in deltas):
        raise ValidationError("deltas must be positive")
    if any(e < 0 for e in epsilons):
        raise ValidationError("epsilons must be nonnegative")

    sim = data.get("simulation", {})
    _reject_unknown(sim, _SIM_KEYS, "simulation")
    horizon = float(sim.get("horizon", 5.0))
    dt = float(sim.get("dt", 1.0 / 250.0))
    if horizon <= 0 or dt <= 0:
        raise ValidationError("horizon and dt must be positive")
    ratio = horizon / dt
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValidationError("dt must divide the horizon")
    modes = list(sim.get("modes", ["partial"]))
    for mode in modes:
        if mode not in ("full", "partial"):
            raise ValidationError(f"unknown information mode {mode!r}")
    protection = float(sim.get("protection_level", DEFAULT_PROTECTION))
    if not 0.0 < protection <= 1.0:
        raise ValidationError("protection_level must lie in (0, 1]")
    v0 = float(sim.get("v0", DEFAULT_WEALTH))
    if v0 <= 0:
        raise ValidationError("v0 must be positive")

    out = data.get("output", {})
    _reject_unknown(out, _OUTPUT_KEYS, "output")

    return ScenarioConfig(
        model=model,
        scenarios=scenarios,
        deltas=deltas,
        epsilons=epsilons,
        horizon=horizon,
        dt=dt,
        paths=int(sim.get("paths", 100_000)),
        seed=int(sim.get("seed", 0)),
        modes=modes,
        v0=v0,
        protection_level=protection,
        jobs=int(sim.get("jobs", 1)),
        output_dir=str(out.get("directory", "out")),
    )


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            data = _toml.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"config file not found: {path}") from exc
    except _toml.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_config(data)


def bundled_config_path() -> str:
    """Path of the bundled baseline configuration file."""
    return str(resources.files("carbonppi").joinpath("data/table1.toml"))


def load_default_config() -> ScenarioConfig:
    return load_config(bundled_config_path())


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    raise ValidationError(f"cannot serialise {type(v).__name__}")


def write_config(config: ScenarioConfig, path=None) -> str:
    """Serialise a configuration to TOML; optionally write it to a file."""
    m = config.model
    lines = ["[model]"]
    lines.append(f"k = {int(m.k)}")
    for key, val in (("a", m.a), ("b", m.b), ("sigma", m.sigma)):
        lines.append(f"{key} = {_fmt_value(val)}")
    lines.append(f"r = {_fmt_value(float(m.r))}")
    lines.append(f"lambda = {_fmt_value(float(m.lam))}")
    lines.append(f"beta = {_fmt_value(float(m.beta))}")
    lines.append(f"sigma_y = {_fmt_value(float(m.sigma_y))}")
    lines.append(f"gamma0 = {_fmt_value(float(m.gamma0))}")
    lines.append(f"p0 = {_fmt_value(float(m.p0))}")
    lines.append("correlation = [")
    for row in m.R:
        lines.append("    " + _fmt_value(row) + ",")
    lines.append("]")
    lines.append("")
    lines.append("[scenarios]")
    for name, drift in config.scenarios.items():
        lines.append(f'"{name}" = {_fmt_value(drift)}')
    lines.append("")
    lines.append("[preferences]")
    lines.append(f"deltas = {_fmt_value(config.deltas)}")
    lines.append(f"epsilons = {_fmt_value(config.epsilons)}")
    lines.append("")
    lines.append("[simulation]")
    lines.append(f"horizon = {_fmt_value(config.horizon)}")
    lines.append(f"dt = {_fmt_value(config.dt)}")
    lines.append(f"paths = {int(config.paths)}")
    lines.append(f"seed = {int(config.seed)}")
    lines.append(f"modes = {_fmt_value(config.modes)}")
    lines.append(f"v0 = {_fmt_value(config.v0)}")
    lines.append(f"protection_level = {_fmt_value(config.protection_level)}")
    lines.append(f"jobs = {int(config.jobs)}")
    lines.append("")
    lines.append("[output]")
    lines.append(f'directory = "{config.output_dir}"')
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def config_equal(a: ScenarioConfig, b: ScenarioConfig) -> bool:
    """Field-by-field equality, arrays compared exactly."""
    ma, mb = a.model, b.model
    model_eq = (
        ma.n == mb.n and ma.k == mb.k
        and np.array_equal(ma.a, mb.a) and np.array_equal(ma.b, mb.b)
        and np.array_equal(ma.sigma, mb.sigma) and np.array_equal(ma.R, mb.R)
        and ma.r == mb.r and ma.lam == mb.lam and ma.beta == mb.beta
        and ma.sigma_y == mb.sigma_y and ma.gamma0 == mb.gamma0
        and ma.p0 == mb.p0
    )
    scen_eq = (set(a.scenarios) == set(b.scenarios)
               and all(np.array_equal(a.scenarios[k], b.scenarios[k])
                       for k in a.scenarios))
    return (model_eq and scen_eq and a.deltas == b.deltas
            and a.epsilons == b.epsilons and a.horizon == b.horizon
            and a.dt == b.dt and a.paths == b.paths and a.seed == b.seed
            and a.modes == b.modes and a.v0 == b.v0
            and a.protection_level == b.protection_level
            and a.jobs == b.jobs and a.output_dir == b.output_dir)
