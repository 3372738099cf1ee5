"""Scenario configuration: YAML file with vehicle, mpc, synthesis and scenario sections."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import yaml

from .vehicle import (LateralBounds, LongitudinalModel, LpvModel, VehicleParams,
                      build_lateral_lpv, build_longitudinal)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MpcParams:
    eta: float = 100.0
    zeta: float = 0.1
    a_min: float = -6.0
    a_max: float = 2.0
    N: int = 5
    e_y_max: Optional[float] = 4.0
    de_y_max: float = 10.0
    e_psi_max: float = np.pi / 2
    de_psi_max: Optional[float] = None
    delta_max: float = 0.5
    v_min: float = 15.0
    v_max: float = 30.0
    Q: float = 50.0
    R: float = 5.0
    delta_unc: float = 0.2
    d_max: float = 0.01


@dataclass(frozen=True)
class SynthesisParams:
    Q_syn: float = 50.0
    R_syn: float = 5.0
    max_iter: int = 500


@dataclass(frozen=True)
class ScenarioConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    mpc: MpcParams = field(default_factory=MpcParams)
    synthesis: SynthesisParams = field(default_factory=SynthesisParams)
    s0: float = 1.0
    v0: float = 25.0
    x0: Tuple[float, float, float, float] = (3.27, 0.55, -0.24, 0.3)
    v_ref: float = 18.0
    steps: int = 100
    seed: int = 0
    disturbance: str = "uniform"
    w_scale: float = 1.0
    delta_mode: str = "relative"
    tighten_w: bool = False
    vertex_rows: str = "max"
    gain_pairing: str = "matched"

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if len(self.x0) != 4:
            raise ConfigError("scenario.x0 needs four entries (e_y, de_y, e_psi, de_psi)")
        if self.disturbance not in ("uniform", "vertex", "off"):
            raise ConfigError(f"scenario.disturbance: unknown value {self.disturbance!r}")
        if self.delta_mode not in ("relative", "additive"):
            raise ConfigError(f"scenario.delta_mode: unknown value {self.delta_mode!r}")
        if self.vertex_rows not in ("max", "full"):
            raise ConfigError(f"scenario.vertex_rows: unknown value {self.vertex_rows!r}")
        if self.gain_pairing not in ("matched", "all"):
            raise ConfigError(f"scenario.gain_pairing: unknown value {self.gain_pairing!r}")
        if self.steps < 0:
            raise ConfigError("scenario.steps must be non-negative")
        if not self.mpc.v_min <= self.v0 <= self.mpc.v_max:
            raise ConfigError(f"scenario.v0 = {self.v0} outside [{self.mpc.v_min}, {self.mpc.v_max}]")
        if not np.all(np.abs(self.x0) <= self.lateral_bounds().state):
            raise ConfigError("scenario.x0 violates the lateral state constraints")

    def lateral_bounds(self) -> LateralBounds:
        mp = self.mpc
        e_y = self.vehicle.e_y_max if mp.e_y_max is None else mp.e_y_max
        de_psi = np.pi / (3 * self.vehicle.t_s) if mp.de_psi_max is None else mp.de_psi_max
        return LateralBounds(e_y, mp.de_y_max, mp.e_psi_max, de_psi, mp.delta_max)

    def lateral_model(self) -> LpvModel:
        d = self.mpc.d_max
        return build_lateral_lpv(self.vehicle, self.lateral_bounds(), self.mpc.v_min,
                                 self.mpc.v_max, -d, d)

    def longitudinal_model(self) -> LongitudinalModel:
        return build_longitudinal(self.vehicle, self.mpc.v_min, self.mpc.v_max,
                                  self.mpc.a_min, self.mpc.a_max)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


_SECTIONS = {"vehicle": VehicleParams, "mpc": MpcParams, "synthesis": SynthesisParams}


def _build(cls, values: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"unknown key {section}.{unknown[0]}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid [{section}] section: {exc}") from exc


def config_from_dict(doc: dict) -> ScenarioConfig:
    """Build a configuration; missing keys keep their defaults."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = sorted(set(doc) - set(_SECTIONS) - {"scenario"})
    if unknown:
        raise ConfigError(f"unknown section {unknown[0]}")
    kw = {}
    for name, cls in _SECTIONS.items():
        section = doc.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"section {name} must be a mapping")
        kw[name] = _build(cls, section, name)
    scen = doc.get("scenario") or {}
    if not isinstance(scen, dict):
        raise ConfigError("section scenario must be a mapping")
    return _build(ScenarioConfig, {**scen, **kw}, "scenario")


def default_config_text() -> str:
    return resources.files("lpvtube").joinpath("data/default.yaml").read_text()


def default_config() -> ScenarioConfig:
    return config_from_dict(yaml.safe_load(default_config_text()))


def load_config(path=None) -> ScenarioConfig:
    """Read a YAML configuration; ``None`` gives the shipped defaults."""
    if path is None:
        return default_config()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(doc)
