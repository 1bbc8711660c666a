"""Load the YAML configuration into the package's model objects."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .actuation import McKibbenParams, PidGains, build_joints
from .arm import N_SEGMENTS, ArmGeometry, JointLimits, SegmentGeometry
from .errors import ConfigError
from .ik import IkParams
from .plant import SimConfig, TankState
from .spatial import Pose

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Profile:
    """Antagonistic floor per joint plus the PID gain set used with it."""

    name: str
    p_A: np.ndarray
    gains: PidGains


def default_config_path():
    return resources.files("umarm") / "data" / "umarm.yaml"


def read_raw(path=None):
    """Parsed YAML mapping; the packaged defaults when ``path`` is None."""
    if path is None:
        text = default_config_path().read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path or 'default config'}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return raw


def _section(raw, name):
    try:
        sec = raw[name]
    except KeyError:
        raise ConfigError(f"missing config section '{name}'") from None
    if not isinstance(sec, dict):
        raise ConfigError(f"config section '{name}' must be a mapping")
    return sec


def _get(sec, key, name):
    try:
        return sec[key]
    except KeyError:
        raise ConfigError(f"missing key '{name}.{key}'") from None


class Config:
    """Every model object the experiments need, built from one YAML mapping."""

    def __init__(self, raw):
        self.raw = copy.deepcopy(raw)
        version = raw.get("schema_version")
        if version is None:
            raise ConfigError("config is missing 'schema_version'")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        try:
            self._build()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc

    def _build(self):
        raw = self.raw
        geo = _section(raw, "geometry")
        limit = np.deg2rad(float(_get(geo, "joint_limit_deg", "geometry")))
        seg = SegmentGeometry.build(
            rod_length=float(_get(geo, "rod_length", "geometry")),
            upper_plate_half_height=float(_get(geo, "upper_plate_half_height", "geometry")),
            lower_plate_half_height=float(_get(geo, "lower_plate_half_height", "geometry")),
            lever_arm_radius=float(_get(geo, "lever_arm_radius", "geometry")),
            actuator_rest_length=float(_get(geo, "actuator_rest_length", "geometry")),
            group_offset=np.deg2rad(float(geo.get("group_offset_deg", 45.0))),
        )
        masses = _section(raw, "masses")
        fr = _get(masses, "fractions", "masses")
        self.arm = ArmGeometry(
            [seg] * N_SEGMENTS,
            end_effector=Pose.from_translation(geo.get("end_effector_offset", [0.0, 0.0, 0.0])),
            mass_fractions=(fr["upper_plate"], fr["rod"], fr["lower_plate"]),
            total_mass=float(_get(masses, "total", "masses")),
            base_segment_scale=float(geo.get("base_segment_scale", 1.3)),
            limits=JointLimits.symmetric(limit),
        )

        act = _section(raw, "actuators")
        self.max_pressure = float(act.get("max_pressure_kpa", 276.0))
        self.muscle = McKibbenParams(
            rest_length=float(_get(act, "rest_length", "actuators")),
            max_contraction=float(act.get("max_contraction", 0.34)),
            force_gain=float(_get(act, "force_gain", "actuators")),
            max_pressure=self.max_pressure,
        )
        self.base_force_scale = float(act.get("base_force_scale", 1.5))
        self.attachment_angle = np.deg2rad(float(act.get("attachment_angle_deg", 10.0)))

        self.ik = IkParams(**_section(raw, "ik"))

        ctl = _section(raw, "controller")
        self.control_rate = float(ctl.get("rate_hz", 100.0))
        self.derate_gamma = float(ctl.get("derate_gamma", 1.0))

        self.gains = {name: PidGains(**g) for name, g in _section(raw, "gains").items()}
        self.profiles = {}
        for name, p in _section(raw, "profiles").items():
            gname = _get(p, "gains", f"profiles.{name}")
            if gname not in self.gains:
                raise ConfigError(f"profile '{name}' refers to unknown gains '{gname}'")
            pa = np.repeat(np.asarray(_get(p, "p_a_kpa", f"profiles.{name}"), dtype=float), 4)
            if pa.shape != (12,) or np.any(pa < 0) or np.any(pa > self.max_pressure):
                raise ConfigError(f"profile '{name}' needs three p_A values in [0, {self.max_pressure}] kPa")
            self.profiles[name] = Profile(name, pa, self.gains[gname])

        sim = _section(raw, "sim")
        self.sim = SimConfig(
            dt=float(sim.get("dt", 1e-3)),
            rotor_inertia=float(sim.get("rotor_inertia", 1e-3)),
            damping_base=float(sim.get("damping_base", 0.05)),
            damping_pressure=float(sim.get("damping_pressure", 2e-4)),
            tau_fill=float(sim.get("tau_fill", 0.08)),
            tau_vent=float(sim.get("tau_vent", 0.12)),
            deadband=float(sim.get("deadband_kpa", 3.0)),
            supply_pressure=self.max_pressure,
            hardstop_margin=np.deg2rad(float(sim.get("hardstop_margin_deg", 2.0))),
            actuator_volume=float(sim.get("actuator_volume_l", 0.012)),
        )
        steps = self.sim.dt * self.control_rate
        if abs(1.0 / steps - round(1.0 / steps)) > 1e-9:
            raise ConfigError("controller period must be a whole number of plant steps")

        tank = _section(raw, "tank")
        self.tank = TankState(
            volume=float(tank.get("volume_l", 1.11)),
            pressure=float(tank.get("pressure_kpa", 31000.0)),
            regulator_setpoint=float(tank.get("regulator_kpa", self.max_pressure)),
        )

        self.step_response = _section(raw, "step_response")
        wp = _section(raw, "waypoints")
        self.waypoints = np.asarray(_get(wp, "points", "waypoints"), dtype=float).reshape(-1, 3)
        self.waypoint_dwell = float(wp.get("dwell", 5.0))
        self.waypoint_window = float(wp.get("window", 2.0))
        self.payload = _section(raw, "payload")
        self.endurance = _section(raw, "endurance")
        self.compliance = _section(raw, "compliance")

    @property
    def joints(self):
        return build_joints(self.arm, self.muscle, self.base_force_scale, self.attachment_angle)

    def profile(self, name):
        try:
            return self.profiles[name]
        except KeyError:
            known = ", ".join(sorted(self.profiles))
            raise ConfigError(f"unknown profile '{name}' (known: {known})") from None

    def with_overrides(self, **sections):
        """New config with top-level sections shallow-merged from ``sections``."""
        raw = copy.deepcopy(self.raw)
        for key, value in sections.items():
            if isinstance(value, dict) and isinstance(raw.get(key), dict):
                raw[key] = {**raw[key], **value}
            else:
                raw[key] = value
        return Config(raw)


def load_config(path=None):
    return Config(read_raw(path))
