"""Pedestrian motion: scripted ground truth, observation tracks, and
short-horizon forecasts used to condition the planner.

A forecast is a sequence of K discs (center, radius) at times t0 + k*dt,
k = 1..K. The constant-velocity forecaster grows the radius with k to
admit its own uncertainty; the oracle forecaster reads the script and
keeps the radius at the base value.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class WaypointScript:
    """Piecewise-linear pedestrian path in absolute time (seconds)."""

    t: np.ndarray
    xy: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.xy = np.asarray(self.xy, dtype=np.float64)
        if self.t.ndim != 1 or self.xy.shape != (self.t.size, 2):
            raise ValueError("script needs t of shape (m,) and xy of shape (m, 2)")
        if self.t.size == 0:
            raise ValueError("empty script")
        if np.any(np.diff(self.t) <= 0.0):
            raise ValueError("script timestamps must be strictly increasing")

    def sample(self, t):
        """Position at time t, clamped to the script's span."""
        t = np.clip(np.asarray(t, dtype=np.float64), self.t[0], self.t[-1])
        x = np.interp(t, self.t, self.xy[:, 0])
        y = np.interp(t, self.t, self.xy[:, 1])
        return np.stack([x, y], axis=-1)


def save_script_csv(path, script):
    with open(path, "w") as fh:
        fh.write("t,x,y\n")
        for t, (x, y) in zip(script.t, script.xy):
            fh.write(f"{t:.17g},{x:.17g},{y:.17g}\n")


def load_script_csv(path):
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return WaypointScript(t=rows[:, 0], xy=rows[:, 1:3])


@dataclass
class PedestrianTrack:
    """Uniformly sampled recent observations of one pedestrian."""

    t: np.ndarray
    xy: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.xy = np.asarray(self.xy, dtype=np.float64)
        if self.t.ndim != 1 or self.xy.shape != (self.t.size, 2):
            raise ValueError("track needs t of shape (n,) and xy of shape (n, 2)")
        if self.t.size == 0:
            raise ValueError("empty track")
        if self.t.size > 1:
            gaps = np.diff(self.t)
            if np.any(gaps <= 0.0):
                raise ValueError("track timestamps must be strictly increasing")
            if np.max(np.abs(gaps - gaps[0])) > 1e-9 * max(1.0, abs(gaps[0])):
                raise ValueError("track must be uniformly sampled")


@dataclass
class Forecast:
    """K discs at t0 + k*dt for k = 1..K; the robot must stay outside them."""

    t0: float
    dt: float
    positions: np.ndarray  # (K, 2)
    radii: np.ndarray  # (K,)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.radii = np.asarray(self.radii, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError("forecast positions must have shape (K, 2)")
        if self.radii.shape != (self.positions.shape[0],):
            raise ValueError("forecast radii must have shape (K,)")
        if self.positions.shape[0] < 1:
            raise ValueError("forecast horizon must be at least 1")
        if self.dt <= 0.0:
            raise ValueError("forecast dt must be positive")
        if not np.all(np.isfinite(self.positions)) or not np.all(np.isfinite(self.radii)):
            raise ValueError("forecast contains non-finite values")
        if np.any(self.radii <= 0.0):
            raise ValueError("forecast radii must be positive")
        if np.any(np.diff(self.radii) < 0.0):
            raise ValueError("forecast radii must be nondecreasing")

    @property
    def horizon(self):
        return self.positions.shape[0]

    def disc_at(self, t):
        """(center, radius) of the disc governing absolute time t.

        Times map to the nearest step index rounding up; beyond the horizon
        the last disc is frozen, before the first step the first disc rules.
        """
        k = int(np.ceil((t - self.t0) / self.dt - 1e-12))
        k = min(max(k, 1), self.horizon)
        return self.positions[k - 1], self.radii[k - 1]


def constant_velocity_forecast(track, horizon=8, dt=0.4, r0=0.2, dr=0.05):
    """Extrapolate the mean of the last few observed displacements.

    The velocity estimate averages the final min(3, n-1) displacement
    vectors; a single-point track extrapolates zero velocity. Disc radii
    start at r0 and grow by dr per step.
    """
    n = len(track.t)
    if n >= 2:
        m = min(3, n - 1)
        steps = track.xy[-m - 1 :]
        track_dt = track.t[1] - track.t[0]
        velocity = np.mean(np.diff(steps, axis=0), axis=0) / track_dt
    else:
        velocity = np.zeros(2)
    last = track.xy[-1]
    ks = np.arange(1, horizon + 1, dtype=np.float64)
    positions = last[None, :] + ks[:, None] * dt * velocity[None, :]
    radii = r0 + ks * dr
    return Forecast(t0=float(track.t[-1]), dt=float(dt), positions=positions, radii=radii)


def oracle_forecast(script, t_now, horizon=8, dt=0.4, r0=0.2):
    """Ground-truth forecast read straight off the script; radius fixed at r0."""
    ks = np.arange(1, horizon + 1, dtype=np.float64)
    positions = script.sample(t_now + ks * dt)
    radii = np.full(horizon, r0)
    return Forecast(t0=float(t_now), dt=float(dt), positions=positions, radii=radii)


def save_forecast_csv(path, forecast):
    with open(path, "w") as fh:
        fh.write("k,x,y,r\n")
        for k, ((x, y), r) in enumerate(zip(forecast.positions, forecast.radii), start=1):
            fh.write(f"{k},{x:.17g},{y:.17g},{r:.17g}\n")


def load_forecast_csv(path, t0=0.0, dt=0.4):
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Forecast(t0=t0, dt=dt, positions=rows[:, 1:3], radii=rows[:, 3])
