"""One JSON document that mirrors every configuration dataclass.

Sections: ``forest``, ``sensor``, ``sampler``, ``optimizer``, ``replan``,
``trial`` (the remaining :class:`TrialSpec` fields) and ``sweep``.  Missing
keys take their defaults; unknown keys are rejected so typos do not pass
silently.  Overrides use dotted keys, e.g. ``optimizer.rho_col=1e7``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .bench import TrialSpec
from .corridor import SamplerConfig
from .replan import ReplanConfig
from .trajopt.optimizer import OptimizerConfig
from .world import ForestSpec, SensorSpec


class ConfigError(ValueError):
    """Malformed configuration document or override."""


@dataclass
class SweepConfig:
    densities: list = field(default_factory=lambda: [1 / 49, 1 / 36, 1 / 25])
    speeds: list = field(default_factory=lambda: [5.0, 10.0])
    trials_per_cell: int = 10
    workers: int = 1


_SECTIONS = {
    "forest": ForestSpec,
    "sensor": SensorSpec,
    "sampler": SamplerConfig,
    "optimizer": OptimizerConfig,
    "replan": ReplanConfig,
    "sweep": SweepConfig,
}
_NESTED = ("forest", "sensor", "sampler", "optimizer", "replan")


def _trial_defaults() -> dict:
    d = {f.name: f.default for f in fields(TrialSpec) if f.name not in _NESTED}
    return copy.deepcopy(d)


def default_config() -> dict:
    """Fully populated configuration document."""
    doc = {name: asdict(cls()) for name, cls in _SECTIONS.items()}
    doc["trial"] = _trial_defaults()
    return doc


def _merge(base: dict, update: dict, where: str = ""):
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown config key '{where}{key}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{where}{key}' must be an object")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value


def load_config(path=None, overrides=()) -> dict:
    """Defaults, updated by the JSON file at ``path`` and then by overrides.

    Raises:
        ConfigError: unreadable/invalid JSON, unknown keys or bad values.
    """
    doc = default_config()
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        _merge(doc, user)
    for item in overrides:
        apply_override(doc, item)
    build_spec(doc)  # validate eagerly
    return doc


def apply_override(doc: dict, item: str):
    """Apply one ``section.key=value`` override; the value is parsed as JSON
    when possible and kept as a string otherwise."""
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = {}
    cur = node
    parts = key.strip().split(".")
    for p in parts[:-1]:
        cur[p] = {}
        cur = cur[p]
    cur[parts[-1]] = value
    _merge(doc, node)


def build_spec(doc: dict) -> TrialSpec:
    """Construct the :class:`TrialSpec` described by ``doc``."""
    try:
        parts = {name: _SECTIONS[name](**doc[name]) for name in _NESTED}
        return TrialSpec(**parts, **doc["trial"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def build_sweep(doc: dict) -> SweepConfig:
    try:
        sweep = SweepConfig(**doc["sweep"])
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if sweep.trials_per_cell < 1 or sweep.workers < 1:
        raise ConfigError("sweep.trials_per_cell and sweep.workers must be >= 1")
    if not sweep.densities or not sweep.speeds:
        raise ConfigError("sweep needs at least one density and one speed")
    return sweep


def write_config(doc: dict, path):
    Path(path).write_text(json.dumps(doc, indent=2))
