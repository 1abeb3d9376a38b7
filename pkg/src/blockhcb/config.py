"""Scenario configuration: nested dataclasses with JSON round-trip and field-path errors.

Physical quantities carry their unit in the key (``noise_dbm``, ``move_time_ms``).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, fields

from .gs import GsConfig


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass(frozen=True)
class SystemConfig:
    M: int = 64
    N: int = 256
    K: int = 2
    L_g: int = 9
    L_b: int = 5
    carrier_hz: float = 60e9
    bandwidth_hz: float = 1e9
    noise_dbm: float = -90.0

    def check(self, path):
        for k in ("M", "N", "K", "L_g", "L_b"):
            if getattr(self, k) < 1:
                raise ConfigError(f"{path}.{k}", "must be >= 1")
        if self.M & (self.M - 1):
            raise ConfigError(f"{path}.M", "must be a power of two")
        for k in ("carrier_hz", "bandwidth_hz"):
            if not getattr(self, k) > 0:
                raise ConfigError(f"{path}.{k}", "must be positive")

    @property
    def wavelength(self) -> float:
        return 299_792_458.0 / self.carrier_hz


@dataclass(frozen=True)
class GeometryConfig:
    array_origin_m: tuple = (0.0, 0.0, 0.0)
    ris_center_m: tuple = (3.0, 10.0, 0.0)
    ue_positions_m: tuple = ((1.5, 13.0, 0.0), (4.5, 12.5, 0.0))
    layout_offsets_m: tuple = (0.0,)
    u_convention: str = "cos"

    def check(self, path):
        if self.u_convention != "cos":
            raise ConfigError(f"{path}.u_convention", "only 'cos' is supported")
        if len(self.array_origin_m) != 3 or len(self.ris_center_m) != 3:
            raise ConfigError(path, "positions need three coordinates")
        if not self.layout_offsets_m:
            raise ConfigError(f"{path}.layout_offsets_m", "needs at least one layout")


@dataclass(frozen=True)
class BlockageConfig:
    density: float = 0.3
    scene: tuple | None = None
    guard_rad: float = 0.0
    elevation_gate: bool = False
    radius_range_m: tuple = (0.2, 1.5)
    distance_range_m: tuple = (2.0, 8.0)

    def check(self, path):
        if not 0 <= self.density <= 1:
            raise ConfigError(f"{path}.density", "must lie in [0, 1]")
        if self.guard_rad < 0:
            raise ConfigError(f"{path}.guard_rad", "must be >= 0")
        if self.scene is not None:
            for i, b in enumerate(self.scene):
                if not isinstance(b, dict) or "center" not in b or "radius" not in b:
                    raise ConfigError(f"{path}.scene[{i}]", "needs 'center' and 'radius'")
                if not b["radius"] > 0:
                    raise ConfigError(f"{path}.scene[{i}].radius", "must be positive")


@dataclass(frozen=True)
class PathLossConfig:
    beta_los: float = 2.0
    beta_nlos: float = 3.3
    los_scale_m: float = 50.0
    k_los: float | None = None
    k_nlos: float | None = None

    def check(self, path):
        if not self.beta_nlos >= self.beta_los > 0:
            raise ConfigError(f"{path}.beta_nlos", "need beta_nlos >= beta_los > 0")
        if not self.los_scale_m > 0:
            raise ConfigError(f"{path}.los_scale_m", "must be positive")


@dataclass(frozen=True)
class EnergyConfig:
    motion_power_w: float = 5.0
    dynamic_power_per_antenna_w: float = 0.3
    static_power_w: float = 0.1
    amp_efficiency: float = 0.2
    move_time_ms: float = 0.5
    slot_ms: float = 200.0
    moves_per_slot: int = 1

    def check(self, path):
        if not 0 < self.amp_efficiency <= 1:
            raise ConfigError(f"{path}.amp_efficiency", "must lie in (0, 1]")
        if not 0 <= self.move_time_ms * self.moves_per_slot < self.slot_ms:
            raise ConfigError(f"{path}.move_time_ms", "motion must fit in the slot")


@dataclass(frozen=True)
class TrainingConfig:
    pilot_length: int = 16
    target_fraction: float = 0.8
    snr_db: float = 30.0
    tx_power_dbm: float = 30.0
    methods: tuple = ("proposed", "traditional", "dft_exhaustive")

    def check(self, path):
        if self.pilot_length < 1:
            raise ConfigError(f"{path}.pilot_length", "must be >= 1")
        if not 0 <= self.target_fraction <= 1:
            raise ConfigError(f"{path}.target_fraction", "must lie in [0, 1]")
        bad = set(self.methods) - {"proposed", "traditional", "dft_exhaustive"}
        if bad:
            raise ConfigError(f"{path}.methods", f"unknown methods {sorted(bad)}")


@dataclass(frozen=True)
class Stage1Config:
    snapshots: int = 32
    starts: int = 8
    max_iter: int = 100
    sectors: int = 16
    drop_threshold: float = 0.1
    refresh_slots: int = 100

    def check(self, path):
        if self.snapshots < 1:
            raise ConfigError(f"{path}.snapshots", "must be >= 1")
        if self.starts < 1:
            raise ConfigError(f"{path}.starts", "must be >= 1")


@dataclass(frozen=True)
class Scenario:
    system: SystemConfig = field(default_factory=SystemConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    blockage: BlockageConfig = field(default_factory=BlockageConfig)
    pathloss: PathLossConfig = field(default_factory=PathLossConfig)
    gs: GsConfig = field(default_factory=GsConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    stage1: Stage1Config = field(default_factory=Stage1Config)
    trials: int = 100
    seed: int = 0

    def check(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if hasattr(v, "check"):
                v.check(f.name)
        if len(self.geometry.ue_positions_m) != self.system.K:
            raise ConfigError("geometry.ue_positions_m", "need one position per UE (system.K)")
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed", "must be >= 0")
        return self

    def replace(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **kw)


_SECTIONS = {"system": SystemConfig, "geometry": GeometryConfig, "blockage": BlockageConfig,
             "pathloss": PathLossConfig, "gs": GsConfig, "energy": EnergyConfig,
             "training": TrainingConfig, "stage1": Stage1Config}


def _freeze(v):
    if isinstance(v, list):
        return tuple(_freeze(x) for x in v)
    return v


def _thaw(v):
    if isinstance(v, tuple):
        return [_thaw(x) for x in v]
    return v


def _coerce(path, cls, data):
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object")
    known = {f.name: f for f in fields(cls)}
    kw = {}
    for k, v in data.items():
        if k not in known:
            raise ConfigError(f"{path}.{k}", "unknown field")
        default = getattr(cls(), k) if k != "scene" else None
        if isinstance(default, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"{path}.{k}", "expected a boolean")
        elif isinstance(default, int) and not isinstance(default, bool):
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"{path}.{k}", "expected an integer")
        elif isinstance(default, float):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ConfigError(f"{path}.{k}", "expected a finite number")
            v = float(v)
        elif isinstance(default, str) and not isinstance(v, str):
            raise ConfigError(f"{path}.{k}", "expected a string")
        kw[k] = v if k == "scene" and v is None else _freeze(v)
        if k == "scene" and v is not None:
            kw[k] = tuple(dict(b) for b in v)
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise ConfigError("<root>", "expected an object")
    kw = {}
    for k, v in d.items():
        if k in _SECTIONS:
            kw[k] = _coerce(k, _SECTIONS[k], v)
        elif k in ("trials", "seed"):
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(k, "expected an integer")
            kw[k] = v
        else:
            raise ConfigError(k, "unknown section")
    return Scenario(**kw).check()


def scenario_to_dict(sc: Scenario) -> dict:
    out = {}
    for name in _SECTIONS:
        sec = getattr(sc, name)
        out[name] = {f.name: _thaw(getattr(sec, f.name)) for f in fields(sec)}
        if name == "blockage" and sec.scene is not None:
            out[name]["scene"] = [dict(b) for b in sec.scene]
    out["trials"] = sc.trials
    out["seed"] = sc.seed
    return out


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    return scenario_from_dict(data)


def dump_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2, sort_keys=True)
