"""Scenario configuration: JSON loading, validation and defaults.

The JSON layout mirrors ScenarioConfig; unknown keys are rejected so typos
fail loudly.  Arrival times may be given explicitly or left null, in which
case they are drawn uniformly from `arrival_window` with the scenario seed
(and then sorted), making runs reproducible.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cbf import LateralCbfSpec, LongitudinalCbfSpec
from .controller import ControllerConfig
from .dynamics import DEFAULT_PARAMS, VehicleParams
from .planner import RoadGeometry


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass(frozen=True)
class VehicleSpec:
    t_arrival: float | None = None    # None: drawn from the arrival window
    initial_speed: float = 13.4
    initial_heading_offset: float = 0.0  # rad, relative to the road tangent
    initial_lateral_offset: float = 0.0  # m
    initial_steering: float = 0.0        # rad, controller initial command
    mass_factor: float = 1.0             # predictor mass / plant mass
    params: VehicleParams = field(default_factory=lambda: DEFAULT_PARAMS)

    def __post_init__(self):
        if self.initial_speed <= 0:
            raise ConfigError("vehicle initial_speed must be positive")
        if self.mass_factor <= 0:
            raise ConfigError("vehicle mass_factor must be positive")


@dataclass(frozen=True)
class LeadScript:
    """Scripted lead vehicle on a straight road, anchored `initial_gap`
    meters ahead of the road origin at t = 0."""
    start_time: float = -5.0
    initial_gap: float = 10.0
    speed_knots: tuple = ((-5.0, 2.0),)   # (t, speed) pairs, piecewise linear

    def __post_init__(self):
        ts = [t for t, _ in self.speed_knots]
        if ts != sorted(ts):
            raise ConfigError("lead speed_knots must be sorted by time")
        if any(v < 0 for _, v in self.speed_knots):
            raise ConfigError("lead speeds must be nonnegative")

    def speed(self, t: float) -> float:
        ts = np.array([k[0] for k in self.speed_knots])
        vs = np.array([k[1] for k in self.speed_knots])
        return float(np.interp(t, ts, vs))

    def accel(self, t: float) -> float:
        knots = self.speed_knots
        for (t0, v0), (t1, v1) in zip(knots, knots[1:]):
            if t0 <= t < t1:
                return (v1 - v0) / (t1 - t0)
        return 0.0

    def position(self, t: float) -> float:
        """Distance along the road; equals initial_gap at t = 0."""
        return self.initial_gap + self._integral(t) - self._integral(0.0)

    def _integral(self, t: float) -> float:
        knots = self.speed_knots
        acc = 0.0
        t_prev, v_prev = knots[0]
        if t <= t_prev:
            return v_prev * (t - t_prev)
        for t1, v1 in knots[1:]:
            if t <= t1:
                v_t = v_prev + (v1 - v_prev) * (t - t_prev) / (t1 - t_prev)
                return acc + 0.5 * (v_prev + v_t) * (t - t_prev)
            acc += 0.5 * (v_prev + v1) * (t1 - t_prev)
            t_prev, v_prev = t1, v1
        return acc + v_prev * (t - t_prev)


@dataclass(frozen=True)
class CbfConfig:
    longitudinal_enabled: bool = False
    longitudinal: LongitudinalCbfSpec = field(default_factory=LongitudinalCbfSpec)
    lateral_enabled: bool = False
    lateral: LateralCbfSpec = field(default_factory=LateralCbfSpec)


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: RoadGeometry
    vehicles: tuple[VehicleSpec, ...]
    controller: ControllerConfig
    dt_sim: float = 0.005
    duration: float = 60.0
    headway: float = 5.0
    merge_speed: float = 13.4
    arrival_window: tuple[float, float] = (0.0, 10.0)
    cbf: CbfConfig = field(default_factory=CbfConfig)
    lead: LeadScript | None = None
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        if self.dt_sim <= 0:
            raise ConfigError("dt_sim must be positive")
        if self.duration < 0:
            raise ConfigError("duration must be nonnegative")
        n = round(self.dt_sim / self.controller.ctrl_step)
        if n < 1 or abs(n * self.controller.ctrl_step - self.dt_sim) > 1e-9:
            raise ConfigError(
                "dt_sim must be an integer multiple of controller.ctrl_step")
        if not self.vehicles:
            raise ConfigError("at least one vehicle is required")
        if self.headway < 0:
            raise ConfigError("headway must be nonnegative")
        if self.merge_speed <= 0:
            raise ConfigError("merge_speed must be positive")
        if self.lead is not None and self.geometry.kind != "straight":
            raise ConfigError("a scripted lead requires a straight road")
        if self.cbf.longitudinal_enabled and self.lead is None:
            raise ConfigError(
                "the longitudinal filter needs a scripted lead vehicle")
        if self.cbf.lateral_enabled and self.geometry.kind != "straight":
            raise ConfigError("the lateral filter requires a straight road")

    def resolved_arrivals(self) -> list[float]:
        """Arrival times with null entries drawn from the window (seeded),
        sorted ascending and snapped to the simulation grid."""
        rng = np.random.default_rng(self.seed)
        lo, hi = self.arrival_window
        times = []
        for v in self.vehicles:
            if v.t_arrival is not None:
                times.append(float(v.t_arrival))
            else:
                times.append(float(rng.uniform(lo, hi)))
        times.sort()
        return [round(t / self.dt_sim) * self.dt_sim for t in times]


def _take(d: dict, ctx: str, allowed: set):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{ctx}: unknown keys {sorted(unknown)}")


def _geometry_from(d: dict) -> RoadGeometry:
    _take(d, "geometry", {"kind", "control_zone", "merge_zone", "radius"})
    try:
        return RoadGeometry(d.get("kind", "straight"),
                            d.get("control_zone", 400.0),
                            d.get("merge_zone", 30.0),
                            d.get("radius"))
    except ValueError as e:
        raise ConfigError(f"geometry: {e}") from e


def _params_from(d: dict, ctx: str) -> VehicleParams:
    _take(d, ctx, {"m", "i_z", "l_f", "l_r", "c_af", "c_ar"})
    try:
        merged = {k: d.get(k, getattr(DEFAULT_PARAMS, k))
                  for k in ("m", "i_z", "l_f", "l_r", "c_af", "c_ar")}
        return VehicleParams(**merged)
    except ValueError as e:
        raise ConfigError(f"{ctx}: {e}") from e


def _vehicle_from(d: dict, i: int) -> VehicleSpec:
    ctx = f"vehicles[{i}]"
    _take(d, ctx, {"t_arrival", "initial_speed", "initial_heading_offset",
                   "initial_lateral_offset", "initial_steering",
                   "mass_factor", "params"})
    kwargs = {k: d[k] for k in d if k != "params"}
    if "params" in d:
        kwargs["params"] = _params_from(d["params"], ctx + ".params")
    try:
        return VehicleSpec(**kwargs)
    except ConfigError as e:
        raise ConfigError(f"{ctx}: {e}") from e


def _controller_from(d: dict) -> ControllerConfig:
    _take(d, "controller", {"alpha", "horizon", "predictor_step", "ctrl_step",
                            "jac_eps_accel", "jac_eps_steer", "cond_max",
                            "a_min", "a_max"})
    try:
        return ControllerConfig(**d)
    except ValueError as e:
        raise ConfigError(f"controller: {e}") from e


def _cbf_from(d: dict) -> CbfConfig:
    _take(d, "cbf", {"longitudinal", "lateral"})
    lon = dict(d.get("longitudinal", {}))
    lat = dict(d.get("lateral", {}))
    _take(lon, "cbf.longitudinal", {"enabled", "d0", "a_bar"})
    _take(lat, "cbf.lateral", {"enabled", "y_max", "a_tilde", "gamma"})
    lon_en = bool(lon.pop("enabled", False))
    lat_en = bool(lat.pop("enabled", False))
    try:
        return CbfConfig(lon_en, LongitudinalCbfSpec(**lon),
                         lat_en, LateralCbfSpec(**lat))
    except ValueError as e:
        raise ConfigError(f"cbf: {e}") from e


def _lead_from(d: dict) -> LeadScript:
    _take(d, "lead", {"start_time", "initial_gap", "speed_knots"})
    kwargs = dict(d)
    if "speed_knots" in kwargs:
        kwargs["speed_knots"] = tuple((float(t), float(v))
                                      for t, v in kwargs["speed_knots"])
    return LeadScript(**kwargs)


_TOP_KEYS = {"geometry", "vehicles", "controller", "dt_sim", "duration",
             "headway", "merge_speed", "arrival_window", "cbf", "lead",
             "seed", "out_dir"}


def config_from_dict(d: dict) -> ScenarioConfig:
    _take(d, "config", _TOP_KEYS)
    if "geometry" not in d:
        raise ConfigError("config: missing required key 'geometry'")
    if "vehicles" not in d or not isinstance(d["vehicles"], list):
        raise ConfigError("config: 'vehicles' must be a nonempty list")
    kwargs = {
        "geometry": _geometry_from(dict(d["geometry"])),
        "vehicles": tuple(_vehicle_from(dict(v), i)
                          for i, v in enumerate(d["vehicles"])),
        "controller": _controller_from(dict(d.get("controller", {}))),
        "cbf": _cbf_from(dict(d.get("cbf", {}))),
    }
    if d.get("lead") is not None:
        kwargs["lead"] = _lead_from(dict(d["lead"]))
    for k in ("dt_sim", "duration", "headway", "merge_speed", "seed",
              "out_dir"):
        if k in d:
            kwargs[k] = d[k]
    if "arrival_window" in d:
        w = d["arrival_window"]
        if not (isinstance(w, list) and len(w) == 2 and w[0] <= w[1]):
            raise ConfigError("arrival_window must be [lo, hi] with lo <= hi")
        kwargs["arrival_window"] = (float(w[0]), float(w[1]))
    return ScenarioConfig(**kwargs)


def load_config(path) -> ScenarioConfig:
    """Load and validate a scenario configuration from a JSON file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(raw)


def describe(cfg: ScenarioConfig) -> str:
    """Echo of the resolved configuration, one line per setting."""
    lines = [
        f"road: {cfg.geometry.kind}, control zone {cfg.geometry.control_zone} m, "
        f"merge zone {cfg.geometry.merge_zone} m",
        f"vehicles: {len(cfg.vehicles)}, arrivals {cfg.resolved_arrivals()}",
        f"controller: alpha={cfg.controller.alpha}, T={cfg.controller.horizon} s, "
        f"predictor step {cfg.controller.predictor_step} s, "
        f"ctrl step {cfg.controller.ctrl_step} s",
        f"dt_sim={cfg.dt_sim} s, duration={cfg.duration} s, seed={cfg.seed}",
        f"cbf: longitudinal={'on' if cfg.cbf.longitudinal_enabled else 'off'}, "
        f"lateral={'on' if cfg.cbf.lateral_enabled else 'off'}",
    ]
    if cfg.lead is not None:
        lines.append(f"lead: gap {cfg.lead.initial_gap} m at t=0, "
                     f"knots {list(cfg.lead.speed_knots)}")
    return "\n".join(lines)
