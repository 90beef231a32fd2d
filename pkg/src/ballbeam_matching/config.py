"""Run configuration: a TOML file with ``plant``, ``generator``, ``sim`` and per-command tables."""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .controller import LinearGains
from .errors import ConfigError, GeneratorError
from .family import FamilySpec, GeneratorSpec
from .plant import PlantParams, State
from .sim import NONLINEAR, OPEN_LOOP, SimConfig

__all__ = ["RunConfig", "VerifyOptions", "BasinOptions", "load_config", "parse_config", "LAW_NAMES"]

LAW_NAMES = ("nonlinear", "linear", "open")

_SCHEMA: dict[str, set[str]] = {
    "plant": {"a3", "a4", "a5", "a6", "a7", "rho", "s_max"},
    "generator": {"mu1", "h", "w", "s0", "chat_gains"},
    "sim": {"t_final", "dt", "integrator_tol", "stop_on_beam_exit"},
    "simulate": {"law", "x0"},
    "linear": {"a8", "Kbp", "Kap", "Kbd", "Kad"},
    "fit": {"tol", "max_iter"},
    "basin": {"law", "s", "theta", "s_dot", "theta_dot", "capture_radius", "workers"},
    "verify": {
        "s",
        "theta",
        "tolerance",
        "derivative_points",
        "derivative_tolerance",
        "dissipation_t_final",
        "dissipation_tolerance",
        "seed",
    },
    "debug": {"ghat11_scale"},
}


@dataclass(frozen=True)
class VerifyOptions:
    s: tuple[float, ...] = tuple(np.linspace(0.3, 0.9, 20))
    theta: tuple[float, ...] = tuple(np.linspace(-0.5, 0.5, 20))
    tolerance: float = 1e-6
    derivative_points: int = 100
    derivative_tolerance: float = 1e-5
    dissipation_t_final: float = 2.0
    dissipation_tolerance: float = 1e-4
    seed: int = 12345


@dataclass(frozen=True)
class BasinOptions:
    law: str = "nonlinear"
    axes: tuple[tuple[float, ...], ...] = ((0.5,), (0.0,), (0.0,), (0.0,))
    capture_radius: float = 1e-3
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    plant: PlantParams
    generator: GeneratorSpec
    sim: SimConfig
    spec: FamilySpec
    law: str = "nonlinear"
    x0: State | None = None
    linear: LinearGains | None = None
    fit_tol: float = 1e-8
    fit_max_iter: int = 50
    basin: BasinOptions = field(default_factory=BasinOptions)
    verify: VerifyOptions = field(default_factory=VerifyOptions)

    def resolve_law(self, name: str | None = None):
        name = name or self.law
        if name == "nonlinear":
            return NONLINEAR
        if name == "open":
            return OPEN_LOOP
        if name == "linear":
            if self.linear is None:
                raise ConfigError("law 'linear' needs a [linear] table with Kbp, Kap, Kbd, Kad")
            return self.linear
        raise ConfigError(f"unknown law {name!r}; expected one of {', '.join(LAW_NAMES)}")


class _Locator:
    """Maps ``section.key`` to the line where it is defined in the source text."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines: dict[tuple[str, str], int] = {}
        self.sections: dict[str, int] = {}
        section = ""
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            header = re.match(r"^\[\s*([A-Za-z0-9_.\-]+)\s*\]", line)
            if header:
                section = header.group(1)
                self.sections.setdefault(section, lineno)
                continue
            key = re.match(r"^([A-Za-z0-9_\-]+)\s*=", line)
            if key:
                self.lines.setdefault((section, key.group(1)), lineno)

    def error(self, section: str, key: str | None, message: str) -> ConfigError:
        line = self.lines.get((section, key)) if key else self.sections.get(section)
        where = f"{self.source}:{line}" if line else self.source
        name = f"{section}.{key}" if key else section
        return ConfigError(f"{where}: {name}: {message}")


def _number(loc: _Locator, section: str, key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise loc.error(section, key, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise loc.error(section, key, "must be finite")
    return float(value)


def _numbers(loc: _Locator, section: str, key: str, value: Any, length: int | None = None) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise loc.error(section, key, f"expected a list of numbers, got {value!r}")
    out = tuple(_number(loc, section, key, v) for v in value)
    if length is not None and len(out) != length:
        raise loc.error(section, key, f"expected {length} numbers, got {len(out)}")
    if not out:
        raise loc.error(section, key, "list is empty")
    return out


def _axis(loc: _Locator, section: str, key: str, value: Any) -> tuple[float, ...]:
    """Either an explicit list of values or a ``{start, stop, num}`` table."""
    if isinstance(value, dict):
        extra = set(value) - {"start", "stop", "num"}
        if extra or not {"start", "stop", "num"} <= set(value):
            raise loc.error(section, key, "axis table needs exactly start, stop, num")
        num = value["num"]
        if isinstance(num, bool) or not isinstance(num, int) or num < 1:
            raise loc.error(section, key, "num must be a positive integer")
        start = _number(loc, section, key, value["start"])
        stop = _number(loc, section, key, value["stop"])
        return tuple(float(v) for v in np.linspace(start, stop, num))
    return _numbers(loc, section, key, value)


def _field_from_message(message: str) -> tuple[str, str | None]:
    found = re.search(r"\b(plant|generator|sim)\.(\w+)", message)
    if found:
        return found.group(1), found.group(2)
    if "ghat11_scale" in message:
        return "debug", "ghat11_scale"
    return "generator", None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    loc = _Locator(text, source)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    for section, body in data.items():
        if section not in _SCHEMA:
            raise loc.error(section, None, "unknown section")
        if not isinstance(body, dict):
            raise loc.error(section, None, "expected a table")
        for key in body:
            if key not in _SCHEMA[section]:
                raise loc.error(section, key, "unknown key")

    def table(name):
        return data.get(name, {})

    plant_t = table("plant")
    plant_kw = {k: _number(loc, "plant", k, v) for k, v in plant_t.items()}

    gen_t = table("generator")
    gen_kw: dict[str, Any] = {}
    for key in ("mu1", "h", "w"):
        if key in gen_t:
            gen_kw[key] = _numbers(loc, "generator", key, gen_t[key])
    if "s0" in gen_t:
        gen_kw["s0"] = _number(loc, "generator", "s0", gen_t["s0"])
    if "chat_gains" in gen_t:
        gen_kw["chat_gains"] = _numbers(loc, "generator", "chat_gains", gen_t["chat_gains"], 2)

    sim_t = table("sim")
    sim_kw: dict[str, Any] = {}
    for key in ("t_final", "dt", "integrator_tol"):
        if key in sim_t:
            sim_kw[key] = _number(loc, "sim", key, sim_t[key])
    if "stop_on_beam_exit" in sim_t:
        if not isinstance(sim_t["stop_on_beam_exit"], bool):
            raise loc.error("sim", "stop_on_beam_exit", "expected true or false")
        sim_kw["stop_on_beam_exit"] = sim_t["stop_on_beam_exit"]

    scale = _number(loc, "debug", "ghat11_scale", table("debug").get("ghat11_scale", 1.0))
    try:
        plant = PlantParams(**plant_kw)
        gen = GeneratorSpec(**gen_kw)
        spec = FamilySpec(plant, gen, ghat11_scale=scale)
    except GeneratorError as exc:
        section, key = _field_from_message(str(exc))
        raise loc.error(section, key, str(exc)) from exc
    try:
        sim = SimConfig(**sim_kw)
    except ValueError as exc:
        section, key = _field_from_message(str(exc))
        raise loc.error(section, key, str(exc)) from exc

    simulate_t = table("simulate")
    law = simulate_t.get("law", "nonlinear")
    if law not in LAW_NAMES:
        raise loc.error("simulate", "law", f"expected one of {', '.join(LAW_NAMES)}")
    x0 = None
    if "x0" in simulate_t:
        x0 = State(*_numbers(loc, "simulate", "x0", simulate_t["x0"], 4))

    linear = None
    lin_t = table("linear")
    if lin_t:
        missing = {"Kbp", "Kap", "Kbd", "Kad"} - set(lin_t)
        if missing:
            raise loc.error("linear", None, f"missing {', '.join(sorted(missing))}")
        vals = {k: _number(loc, "linear", k, v) for k, v in lin_t.items()}
        vals.setdefault("a8", plant.feedforward(gen.s0))
        linear = LinearGains(**vals)

    fit_t = table("fit")
    fit_tol = _number(loc, "fit", "tol", fit_t.get("tol", 1e-8))
    max_iter = fit_t.get("max_iter", 50)
    if isinstance(max_iter, bool) or not isinstance(max_iter, int) or max_iter < 1:
        raise loc.error("fit", "max_iter", "expected a positive integer")
    if fit_tol <= 0:
        raise loc.error("fit", "tol", "must be > 0")

    basin_t = table("basin")
    basin_law = basin_t.get("law", "nonlinear")
    if basin_law not in LAW_NAMES:
        raise loc.error("basin", "law", f"expected one of {', '.join(LAW_NAMES)}")
    default_axes = ((gen.s0,), (0.0,), (0.0,), (0.0,))
    axes = tuple(
        _axis(loc, "basin", key, basin_t[key]) if key in basin_t else default_axes[i]
        for i, key in enumerate(("s", "theta", "s_dot", "theta_dot"))
    )
    radius = _number(loc, "basin", "capture_radius", basin_t.get("capture_radius", 1e-3))
    if radius <= 0:
        raise loc.error("basin", "capture_radius", "must be > 0")
    workers = basin_t.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise loc.error("basin", "workers", "expected a positive integer")

    ver_t = table("verify")
    defaults = VerifyOptions()
    ver_kw: dict[str, Any] = {}
    for key in ("s", "theta"):
        if key in ver_t:
            ver_kw[key] = _axis(loc, "verify", key, ver_t[key])
    for key in ("tolerance", "derivative_tolerance", "dissipation_t_final", "dissipation_tolerance"):
        if key in ver_t:
            ver_kw[key] = _number(loc, "verify", key, ver_t[key])
            if ver_kw[key] <= 0:
                raise loc.error("verify", key, "must be > 0")
    for key in ("derivative_points", "seed"):
        if key in ver_t:
            value = ver_t[key]
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise loc.error("verify", key, "expected a non-negative integer")
            ver_kw[key] = value
    verify = VerifyOptions(**{**defaults.__dict__, **ver_kw})

    return RunConfig(
        plant=plant,
        generator=gen,
        sim=sim,
        spec=spec,
        law=law,
        x0=x0,
        linear=linear,
        fit_tol=fit_tol,
        fit_max_iter=max_iter,
        basin=BasinOptions(basin_law, axes, radius, workers),
        verify=verify,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config(text, str(path))
