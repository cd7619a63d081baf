"""Central defaults and key=value configuration files.

Resolution order, strongest first: explicit command-line flags, then the
config file (the --config flag names one; otherwise the SOCNAV_CONFIG
environment variable may), then built-in defaults. Unknown keys in a
config file are errors, not warnings, so typos fail fast.
"""

import dataclasses
import os
from dataclasses import dataclass

from .planner import DwaConfig
from .sim import MotionLimits

ENV_VAR = "SOCNAV_CONFIG"


@dataclass
class Config:
    # environment generation
    grid_size: int = 64
    world_size: float = 10.0
    n_obstacles: int = 2
    degree: int = 5
    n_samples: int = 100
    # model architecture
    d_r: int = 128
    d_gamma: int = 64
    hidden: int = 128
    depth: int = 3
    n_max: int = 10
    # training
    epochs: int = 100
    lr: float = 1e-3
    # pedestrian forecasting
    horizon: int = 8
    forecast_dt: float = 0.4
    r0: float = 0.2
    dr: float = 0.05
    d_safe: float = 0.5
    t_ref: float = 32.0
    social_start_x: float = 1.0
    social_start_y: float = 5.0
    social_goal_x: float = 9.0
    social_goal_y: float = 5.0
    # tracking and simulation
    v_max: float = 1.0
    omega_max: float = 1.5
    accel: float = 0.5
    alpha: float = 2.0
    control_dt: float = 0.1
    v_samples: int = 11
    omega_samples: int = 21
    heading_weight: float = 0.8
    clearance_weight: float = 0.2
    velocity_weight: float = 0.1
    rollout_time: float = 1.5
    robot_radius: float = 0.15
    clearance_cap: float = 1.0
    lookahead: float = 0.5
    sim_dt: float = 0.1
    personal_zone: float = 0.45
    goal_radius: float = 0.2
    timeout: float = 60.0

    def dwa(self):
        return DwaConfig(v_max=self.v_max, omega_max=self.omega_max,
                         accel=self.accel, alpha=self.alpha, dt=self.control_dt,
                         v_samples=self.v_samples, omega_samples=self.omega_samples,
                         heading_weight=self.heading_weight,
                         clearance_weight=self.clearance_weight,
                         velocity_weight=self.velocity_weight,
                         rollout_time=self.rollout_time,
                         robot_radius=self.robot_radius,
                         clearance_cap=self.clearance_cap,
                         lookahead=self.lookahead)

    def limits(self):
        return MotionLimits(v_max=self.v_max, omega_max=self.omega_max,
                            accel=self.accel, alpha=self.alpha)


_FIELDS = {f.name: f.type for f in dataclasses.fields(Config)}


def parse_config_file(path):
    """key=value lines to a typed dict; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected key=value, got '{line}'")
            if key not in _FIELDS:
                raise ValueError(f"{path}:{lineno}: unknown config key '{key}'")
            kind = _FIELDS[key]
            try:
                values[key] = int(val) if kind is int else float(val)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad {kind.__name__} for '{key}': '{val}'")
    return values


def resolve_config(config_path=None, overrides=None, env=None):
    """Merge defaults, a config file, and explicit overrides into a Config.

    config_path falls back to $SOCNAV_CONFIG when not given. overrides is a
    dict of field name to already-typed value (None entries are skipped).
    """
    env = os.environ if env is None else env
    values = {}
    path = config_path if config_path is not None else env.get(ENV_VAR)
    if path:
        values.update(parse_config_file(path))
    if overrides:
        for key, val in overrides.items():
            if val is None:
                continue
            if key not in _FIELDS:
                raise ValueError(f"unknown config key '{key}'")
            values[key] = val
    return Config(**values)
