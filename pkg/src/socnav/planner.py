"""Socially compliant planning: a forecast-conditioned trajectory model,
the space-time expert that demonstrates for it, and a dynamic-window
tracker that turns predicted paths into velocity commands.

The planning condition is a flat vector: current position, goal, and the
pedestrian forecast (K disc centers + K radii), all normalized by the
world extent and expressed relative to the robot. It plays the role of
the conditioning input on every context tuple, so one trained model
serves a whole family of scenarios.
"""

import heapq
import math
import os
from dataclasses import dataclass

import numpy as np

from . import cnp
from .envgen import SQRT2, astar_plan, fit_path_polynomial, octile
from .forecast import (PedestrianTrack, WaypointScript,
                       constant_velocity_forecast, load_forecast_csv,
                       load_script_csv, oracle_forecast, save_forecast_csv,
                       save_script_csv)
from .sim import MotionLimits, VelocityCommand, run_episode
from .trajectory import Trajectory, load_trajectory_csv, save_trajectory_csv
from .world import distance_field, load_pgm, rasterize_empty, save_pgm


@dataclass
class PlanningCondition:
    """Normalized planning inputs: where I am, where I go, what I expect
    the pedestrian to do."""

    position: np.ndarray  # (2,)
    goal: np.ndarray  # (2,)
    forecast_xy: np.ndarray  # (K, 2)
    forecast_r: np.ndarray  # (K,)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(2)
        self.goal = np.asarray(self.goal, dtype=np.float64).reshape(2)
        self.forecast_xy = np.asarray(self.forecast_xy, dtype=np.float64)
        self.forecast_r = np.asarray(self.forecast_r, dtype=np.float64)
        if self.forecast_xy.ndim != 2 or self.forecast_xy.shape[1] != 2:
            raise ValueError("forecast_xy must have shape (K, 2)")
        if self.forecast_r.shape != (self.forecast_xy.shape[0],):
            raise ValueError("forecast_r must have shape (K,)")
        values = np.concatenate([self.position, self.goal,
                                 self.forecast_xy.ravel(), self.forecast_r])
        if not np.all(np.isfinite(values)):
            raise ValueError("condition contains non-finite values")

    @property
    def horizon(self):
        return self.forecast_xy.shape[0]

    def vector(self):
        """Flat (4 + 3K,) conditioning vector in an egocentric frame.

        Goal and forecast positions enter relative to the robot and the
        absolute position is centered. Raw normalized coordinates all sit
        near 0.5, and inputs riding a large shared offset train like extra
        biases: the informative part of their gradient is buried under the
        common mode, so the planner converges to one condition-blind
        average plan. Centering removes the offset.
        """
        return np.concatenate([self.position - 0.5, self.goal - self.position,
                               (self.forecast_xy - self.position).ravel(),
                               self.forecast_r])


def build_condition(position_m, goal_m, fc, extent_m):
    """Normalize metric planning inputs by the (square) world extent."""
    scale = 1.0 / float(extent_m)
    return PlanningCondition(position=np.asarray(position_m) * scale,
                             goal=np.asarray(goal_m) * scale,
                             forecast_xy=fc.positions * scale,
                             forecast_r=fc.radii * scale)


@dataclass
class LocalPlan:
    """Short window of predicted robot positions, in meters, with the
    model's own uncertainty. Times are seconds from now."""

    t: np.ndarray  # (W,)
    xy: np.ndarray  # (W, 2)
    sigma: np.ndarray  # (W, 2)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.xy = np.asarray(self.xy, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.t.ndim != 1 or self.t.size < 2:
            raise ValueError("plan needs at least 2 points")
        if self.xy.shape != (self.t.size, 2) or self.sigma.shape != (self.t.size, 2):
            raise ValueError("plan arrays must share the window length")
        if np.any(np.diff(self.t) <= 0.0):
            raise ValueError("plan times must be strictly increasing")
        if np.any(self.sigma <= 0.0):
            raise ValueError("plan sigma must be positive")


# ---------------------------------------------------------------------------
# space-time expert


def _blocked(grid, cell, k, fc, d_safe, margin):
    """Is `cell` unsafe at discrete step k under the forecast?

    Steps beyond the horizon test against the last disc (the pedestrian is
    presumed to linger); step indices below 1 test against the first disc.
    """
    if grid.cells[cell] == 1:
        return True
    if fc is None:
        return False
    kk = min(max(k, 1), fc.horizon)
    center = grid.center_meters(cell)
    dist = float(np.linalg.norm(center - fc.positions[kk - 1]))
    return dist < d_safe + fc.radii[kk - 1] + margin


def _goal_safe_from(grid, goal, k, fc, d_safe, margin):
    """Once parked on the goal at step k, the robot must stay safe for the
    rest of the horizon."""
    if fc is None:
        return True
    for kk in range(k, fc.horizon + 1):
        if _blocked(grid, goal, kk, fc, d_safe, margin):
            return False
    return True


def spacetime_search(grid, start, goal, fc, d_safe=0.5):
    """A* over (cell, time step) with waiting allowed.

    One step lasts fc.dt seconds. Move costs match the static planner
    (1 / sqrt 2) and waiting in place costs 1 per step. Cells are blocked
    when their center comes within d_safe + disc radius + half a cell
    diagonal of the forecast disc governing that step. Returns the list of
    cells occupied at steps 0..T.
    """
    start = tuple(int(v) for v in start)
    goal = tuple(int(v) for v in goal)
    for name, cell in (("start", start), ("goal", goal)):
        if not grid.is_free_cell(*cell):
            raise ValueError(f"{name} cell {cell} is not free")
    margin = 0.5 * SQRT2 * grid.cell_size
    horizon = fc.horizon if fc is not None else 0

    def key_of(cell, k):
        return (cell, min(k, horizon))

    g = {key_of(start, 0): 0.0}
    parent = {(start, 0): None}
    closed = set()
    h0 = octile(start, goal)
    heap = [(h0, h0, 0, start[0], start[1])]
    moves = [(-1, -1, SQRT2), (-1, 0, 1.0), (-1, 1, SQRT2), (0, -1, 1.0),
             (0, 0, 1.0), (0, 1, 1.0), (1, -1, SQRT2), (1, 0, 1.0), (1, 1, SQRT2)]
    while heap:
        f, h, k, r, c = heapq.heappop(heap)
        cell = (r, c)
        key = key_of(cell, k)
        if key in closed:
            continue
        closed.add(key)
        if cell == goal and _goal_safe_from(grid, goal, k, fc, d_safe, margin):
            timed = []
            node = (cell, k)
            while node is not None:
                timed.append(node[0])
                node = parent[node]
            timed.reverse()
            return timed
        for dr, dc, cost in moves:
            nxt = (r + dr, c + dc)
            if not (0 <= nxt[0] < grid.height and 0 <= nxt[1] < grid.width):
                continue
            if _blocked(grid, nxt, k + 1, fc, d_safe, margin):
                continue
            nkey = key_of(nxt, k + 1)
            if nkey in closed:
                continue
            cand = g[key] + cost
            if cand < g.get(nkey, np.inf) - 1e-12:
                g[nkey] = cand
                parent[(nxt, k + 1)] = (cell, k)
                hn = octile(nxt, goal)
                heapq.heappush(heap, (cand + hn, hn, k + 1, nxt[0], nxt[1]))
    raise RuntimeError(f"no space-time path from {start} to {goal}")


def forecast_margins_ok(traj, duration, fc, d_safe, extent_m):
    """Check a normalized trajectory against every forecast disc.

    Each disc k is tested at its own time k*dt (the plan is sampled there,
    clamped to its end); samples after the horizon are tested against the
    frozen final disc.
    """
    if fc is None:
        return True
    for k in range(1, fc.horizon + 1):
        t_norm = min(k * fc.dt / duration, 1.0)
        p = traj.sample(t_norm) * extent_m
        if np.linalg.norm(p - fc.positions[k - 1]) - fc.radii[k - 1] < d_safe:
            return False
    t_end = fc.horizon * fc.dt / duration
    last_xy, last_r = fc.positions[-1], fc.radii[-1]
    for t, p in zip(traj.t, traj.xy):
        if t >= t_end:
            if np.linalg.norm(p * extent_m - last_xy) - last_r < d_safe:
                return False
    return True


def _cells_to_trajectory(grid, cells_path, n_samples):
    """Uniformly resampled polyline through cell centers, t in [0, 1]."""
    points = np.stack([grid.center_norm(cell) for cell in cells_path])
    t_in = np.linspace(0.0, 1.0, len(points))
    t_out = np.linspace(0.0, 1.0, n_samples)
    xy = np.stack([np.interp(t_out, t_in, points[:, 0]),
                   np.interp(t_out, t_in, points[:, 1])], axis=1)
    return Trajectory(t=t_out, xy=xy, smoothed=False)


def spacetime_expert(grid, start, goal, fc, d_safe=0.5, degree=5,
                     n_samples=100, max_degree=10):
    """Demonstration trajectory that respects the forecast.

    When the plain shortest path already keeps every margin it is used
    as-is, so the expert degenerates exactly to static planning in clear
    worlds. The timed cell path is smoothed like the static demos, with the
    forecast margins rechecked at increasing degree; if no degree passes,
    the raw timed polyline is returned. Returns (trajectory, duration_s)
    with trajectory time normalized so t=1 is the arrival time.
    """
    dt = fc.dt if fc is not None else 0.4
    margin = 0.5 * SQRT2 * grid.cell_size
    plain, _ = astar_plan(grid, start, goal)
    plain_ok = fc is None or (
        all(not _blocked(grid, cell, k, fc, d_safe, margin)
            for k, cell in enumerate(plain))
        and _goal_safe_from(grid, tuple(goal), len(plain) - 1, fc, d_safe, margin))
    timed = plain if plain_ok else spacetime_search(grid, start, goal, fc, d_safe)
    duration = max(len(timed) - 1, 1) * dt

    points = np.stack([grid.center_norm(cell) for cell in timed])
    t_out = np.linspace(0.0, 1.0, n_samples)
    extent = grid.width * grid.cell_size
    for deg in range(int(degree), max_degree + 1):
        fx, fy, _ = fit_path_polynomial(points, deg)
        xy = np.stack([fx(t_out), fy(t_out)], axis=1)
        w = t_out[:, None]
        xy = xy + (1.0 - w) * (points[0] - xy[0]) + w * (points[-1] - xy[-1])
        cand = Trajectory(t=t_out, xy=xy, smoothed=True)
        static_ok = not any(grid.cells[grid.cell_of_norm(p)] for p in xy)
        if static_ok and forecast_margins_ok(cand, duration, fc, d_safe, extent):
            return cand, duration
    return _cells_to_trajectory(grid, timed, n_samples), duration


# ---------------------------------------------------------------------------
# forecast-conditioned trajectory model


class SocialPlannerModel:
    """Trajectory CNP conditioned on (position, goal, forecast) vectors.

    Demo times are normalized by a fixed reference duration t_ref so one
    clock is shared across episodes of different lengths.
    """

    def __init__(self, model, horizon, forecast_dt, t_ref, world_size, d_safe=0.5):
        self.model = model
        self.horizon = int(horizon)
        self.forecast_dt = float(forecast_dt)
        self.t_ref = float(t_ref)
        self.world_size = float(world_size)
        self.d_safe = float(d_safe)

    @property
    def params(self):
        return self.model.params

    @classmethod
    def create(cls, horizon=8, forecast_dt=0.4, t_ref=32.0, world_size=10.0,
               d_safe=0.5, d_r=128, n_max=10, seed=0, hidden=128, depth=3):
        model = cnp.CnpModel.create(d_gamma=4 + 3 * horizon, sm_dim=2, d_r=d_r,
                                    n_max=n_max, seed=seed, hidden=hidden,
                                    depth=depth)
        return cls(model, horizon, forecast_dt, t_ref, world_size, d_safe)

    def save(self, path, extra_meta=None):
        meta = {
            "kind": "social",
            "horizon": self.horizon,
            "forecast_dt": repr(self.forecast_dt),
            "t_ref": repr(self.t_ref),
            "world_size": repr(self.world_size),
            "d_safe": repr(self.d_safe),
        }
        if extra_meta:
            meta.update(extra_meta)
        self.model.save(path, extra_meta=meta)

    @classmethod
    def load(cls, path):
        model, meta = cnp.CnpModel.load(path)
        if meta.get("kind") != "social":
            raise ValueError(f"checkpoint at {path} is not a social planner model")
        return cls(model, horizon=int(meta["horizon"]),
                   forecast_dt=float(meta["forecast_dt"]),
                   t_ref=float(meta["t_ref"]),
                   world_size=float(meta["world_size"]),
                   d_safe=float(meta.get("d_safe", 0.5)))


def history_context(traj, n_max, rng):
    """Context = observed poses up to a random present index, targets = the
    rest of the demo. The planner is queried about the future from its past
    alone, so training must never hand it future positions as context or it
    learns to interpolate between them and ignores the forecast condition.

    The present index is biased toward the start of the episode. Once the
    robot is partway through the demo its own observed detour gives away the
    maneuver, so only early indices force the model to read the forecast;
    a uniform draw makes those steps too rare to shape the fit."""
    i_now = int(len(traj) * rng.random() ** 2)
    n = min(int(rng.integers(1, n_max + 1)), i_now + 1)
    idx = [i_now]
    if n > 1:
        idx.extend(rng.choice(i_now, size=n - 1, replace=False))
    idx = np.sort(np.asarray(idx, dtype=int))
    contexts = [cnp.ContextPoint(t=float(traj.t[i]), sm=traj.xy[i]) for i in idx]
    future = slice(i_now, len(traj))
    return contexts, cnp.QueryBatch(traj.t[future].copy()), traj.xy[future].copy()


def train_social_planner(spm, episodes, epochs, lr=1e-3, seed=0, progress=None):
    """episodes: list of (condition, trajectory) with trajectory time already
    normalized by the model's t_ref."""
    dataset = []
    for condition, traj in episodes:
        vec = condition.vector()
        if vec.size != spm.model.d_gamma:
            raise ValueError(f"condition width {vec.size} != model d_gamma {spm.model.d_gamma}")
        dataset.append((traj, vec))
    return cnp.train(spm.model, dataset, epochs=epochs, lr=lr, seed=seed,
                     progress=progress, sampler=history_context)


def plan_trajectory(spm, condition, n_samples=100):
    """Full predicted trajectory (normalized coords and t_ref time).

    The context is the single known tuple: the current position at t = 0.
    Returns (Trajectory of means, sigma array).
    """
    contexts = [cnp.ContextPoint(t=0.0, sm=condition.position)]
    t_q = np.linspace(0.0, 1.0, n_samples)
    pred = cnp.predict(spm.model, contexts, cnp.QueryBatch(t_q), gamma=condition.vector())
    return Trajectory(t=t_q, xy=pred.mu), pred.sigma


def plan_local_window(spm, condition, t_now, window=4.0, n_points=10):
    """Metric plan for the next few seconds, queried from the model.

    Query times run from now to now + window on the shared t_ref clock,
    clamped at the end of the episode.
    """
    if n_points < 2:
        raise ValueError("window needs at least 2 points")
    t_rel = np.linspace(0.0, float(window), n_points)
    t_norm = np.clip((t_now + t_rel) / spm.t_ref, 0.0, 1.0)
    contexts = [cnp.ContextPoint(t=float(np.clip(t_now / spm.t_ref, 0.0, 1.0)),
                                 sm=condition.position)]
    pred = cnp.predict(spm.model, contexts, cnp.QueryBatch(t_norm),
                       gamma=condition.vector())
    scale = spm.world_size
    return LocalPlan(t=t_rel, xy=pred.mu * scale, sigma=pred.sigma * scale)


# ---------------------------------------------------------------------------
# dynamic-window tracking


@dataclass
class DwaConfig:
    v_max: float = 1.0
    omega_max: float = 1.5
    accel: float = 0.5
    alpha: float = 2.0
    dt: float = 0.1
    v_samples: int = 11
    omega_samples: int = 21
    heading_weight: float = 0.8
    clearance_weight: float = 0.2
    velocity_weight: float = 0.1
    rollout_time: float = 1.5
    robot_radius: float = 0.15
    clearance_cap: float = 1.0
    lookahead: float = 0.5

    def __post_init__(self):
        for name in ("v_max", "omega_max", "accel", "alpha", "dt",
                     "rollout_time", "clearance_cap", "lookahead"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.v_samples < 2 or self.omega_samples < 2:
            raise ValueError("need at least 2 samples per axis")
        weights = (self.heading_weight, self.clearance_weight, self.velocity_weight)
        if any(w < 0.0 for w in weights) or not any(w > 0.0 for w in weights):
            raise ValueError("weights must be nonnegative with at least one positive")
        if self.robot_radius < 0.0:
            raise ValueError("robot_radius must be nonnegative")

    def limits(self):
        return MotionLimits(v_max=self.v_max, omega_max=self.omega_max,
                            accel=self.accel, alpha=self.alpha)


def dynamic_window(state, cfg):
    """Velocity box reachable within one control tick."""
    return cfg.limits().window(state, cfg.dt)


def _select_target(plan, position, cfg):
    """Plan position at the rollout horizon, where the robot should be by
    the time the scored rollouts end. When the plan has nearly stalled
    there (endgame), aim at its final point instead."""
    t = min(cfg.rollout_time, float(plan.t[-1]))
    target = np.array([np.interp(t, plan.t, plan.xy[:, 0]),
                       np.interp(t, plan.t, plan.xy[:, 1])])
    if np.linalg.norm(target - position) < cfg.lookahead:
        return plan.xy[-1]
    return target


def dwa_step(state, plan, grid, cfg, field=None):
    """Pick the best admissible (v, omega) pair in the dynamic window.

    Candidates roll out at constant velocity; pairs whose rollout enters an
    occupied cell, or that could not brake to a stop within their minimum
    clearance, are inadmissible. Survivors are scored by weighted heading
    alignment to the plan, clearance, and speed; the first best in (v outer,
    omega inner) order wins. With no survivors an emergency stop is returned.
    """
    if field is None:
        field = distance_field(grid)
    v_lo, v_hi, w_lo, w_hi = dynamic_window(state, cfg)
    vs = np.linspace(v_lo, v_hi, cfg.v_samples)
    ws = np.linspace(w_lo, w_hi, cfg.omega_samples)
    vv, ww = np.meshgrid(vs, ws, indexing="ij")
    vv = vv.ravel()
    ww = ww.ravel()

    n_steps = max(1, int(round(cfg.rollout_time / cfg.dt)))
    x = np.full(vv.shape, state.x)
    y = np.full(vv.shape, state.y)
    th = np.full(vv.shape, state.theta)
    collided = np.zeros(vv.shape, dtype=bool)
    min_clear = np.full(vv.shape, np.inf)
    h, w = grid.cells.shape
    for _ in range(n_steps):
        x = x + vv * np.cos(th) * cfg.dt
        y = y + vv * np.sin(th) * cfg.dt
        th = th + ww * cfg.dt
        cc = np.clip((x / grid.cell_size).astype(np.int64), 0, w - 1)
        rr = np.clip((y / grid.cell_size).astype(np.int64), 0, h - 1)
        collided |= grid.cells[rr, cc] == 1
        min_clear = np.minimum(min_clear, field[rr, cc] - cfg.robot_radius)

    brake_ok = vv <= np.sqrt(2.0 * cfg.accel * np.clip(min_clear, 0.0, None)) + 1e-9
    admissible = ~collided & brake_ok
    if not np.any(admissible):
        return VelocityCommand(0.0, 0.0, emergency=True)

    target = _select_target(plan, state.position, cfg)
    bearing = np.arctan2(target[1] - y, target[0] - x)
    d_ang = (bearing - th + math.pi) % (2.0 * math.pi) - math.pi
    heading = 1.0 - np.abs(d_ang) / math.pi
    clearance = np.clip(min_clear, 0.0, cfg.clearance_cap) / cfg.clearance_cap
    velocity = vv / cfg.v_max
    scores = (cfg.heading_weight * heading + cfg.clearance_weight * clearance
              + cfg.velocity_weight * velocity)
    scores = np.where(admissible, scores, -np.inf)
    best = int(np.argmax(scores))
    return VelocityCommand(float(vv[best]), float(ww[best]))


# ---------------------------------------------------------------------------
# policies


def straight_line_plan(position, goal, speed, window=4.0, n_points=10):
    """Constant-speed plan straight at the goal, stopping there."""
    t = np.linspace(0.0, float(window), n_points)
    delta = goal - position
    dist = float(np.linalg.norm(delta))
    direction = delta / dist if dist > 1e-9 else np.zeros(2)
    reach = np.minimum(t * speed, dist)
    xy = position[None, :] + reach[:, None] * direction[None, :]
    sigma = np.full_like(xy, 0.1)
    return LocalPlan(t=t, xy=xy, sigma=sigma)


def make_straight_policy(cfg):
    """Track the straight line to the goal; standard tracking baseline."""

    state = {"field": None}

    def policy(world):
        if state["field"] is None:
            state["field"] = distance_field(world.grid)
        plan = straight_line_plan(world.robot.position, world.goal, cfg.v_max)
        return dwa_step(world.robot, plan, world.grid, cfg, field=state["field"])

    return policy


def make_social_policy(spm, cfg, forecaster="cv", history=4, r0=0.2, dr=0.05):
    """Replan from the trajectory model every tick and track it with DWA.

    The pedestrian track is the last few simulator observations; 'cv'
    extrapolates them, 'oracle' reads the script directly. Worlds without
    pedestrians fall back to straight-line tracking.
    """
    if forecaster not in ("cv", "oracle"):
        raise ValueError(f"unknown forecaster '{forecaster}'")
    shared = {"field": None, "obs": []}

    def policy(world):
        if shared["field"] is None:
            shared["field"] = distance_field(world.grid)
        field = shared["field"]
        if not world.pedestrians:
            plan = straight_line_plan(world.robot.position, world.goal, cfg.v_max)
            return dwa_step(world.robot, plan, world.grid, cfg, field=field)
        shared["obs"].append((world.clock, world.pedestrian_positions()[0]))
        if forecaster == "oracle":
            fc = oracle_forecast(world.pedestrians[0], world.clock,
                                 horizon=spm.horizon, dt=spm.forecast_dt, r0=r0)
        else:
            obs = shared["obs"][-history:]
            track = PedestrianTrack(t=np.array([o[0] for o in obs]),
                                    xy=np.stack([o[1] for o in obs]))
            fc = constant_velocity_forecast(track, horizon=spm.horizon,
                                            dt=spm.forecast_dt, r0=r0, dr=dr)
        condition = build_condition(world.robot.position, world.goal, fc,
                                    spm.world_size)
        plan = plan_local_window(spm, condition, t_now=world.clock)
        return dwa_step(world.robot, plan, world.grid, cfg, field=field)

    return policy


def make_static_policy(model, scenario, cfg, cruise_fraction=0.6, n_samples=100,
                       window=4.0, n_points=10):
    """Track one up-front full-trajectory prediction from a static model.

    The model is conditioned on the task endpoints once; the prediction is
    given a nominal schedule at cruise_fraction of top speed and windows of
    it are handed to DWA every tick.
    """
    grid = scenario.grid
    extent = grid.width * grid.cell_size
    contexts = [cnp.ContextPoint(t=0.0, sm=scenario.start / extent),
                cnp.ContextPoint(t=1.0, sm=scenario.goal / extent)]
    queries = cnp.QueryBatch(np.linspace(0.0, 1.0, n_samples))
    if hasattr(model, "encode_tensor") and model.model.d_gamma > 0:
        pred = cnp.predict(model.model, contexts, queries,
                           gamma=model.encode_tensor(grid).data)
    else:
        core = model.model if hasattr(model, "model") else model
        pred = cnp.predict(core, contexts, queries)
    global_traj = Trajectory(t=queries.t_q, xy=pred.mu)
    sigma = pred.sigma
    duration = max(global_traj.path_length() * extent / (cruise_fraction * cfg.v_max),
                   1e-6)
    shared = {"field": None}

    def policy(world):
        if shared["field"] is None:
            shared["field"] = distance_field(world.grid)
        t_rel = np.linspace(0.0, window, n_points)
        t_norm = np.clip((world.clock + t_rel) / duration, 0.0, 1.0)
        xy = global_traj.sample(t_norm) * extent
        sig = np.stack([np.interp(t_norm, queries.t_q, sigma[:, 0]),
                        np.interp(t_norm, queries.t_q, sigma[:, 1])], axis=1) * extent
        plan = LocalPlan(t=t_rel, xy=xy, sigma=sig)
        return dwa_step(world.robot, plan, world.grid, cfg, field=shared["field"])

    return policy


def track_plan(scenario, spm, cfg=None, forecaster="cv", dt=0.1,
               personal_zone=0.45, r0=0.2, dr=0.05):
    """Run one full episode under the social policy; returns the rollout."""
    cfg = cfg if cfg is not None else DwaConfig()
    policy = make_social_policy(spm, cfg, forecaster=forecaster, r0=r0, dr=dr)
    return run_episode(scenario, policy, dt=dt, limits=cfg.limits(),
                       personal_zone=personal_zone, robot_radius=cfg.robot_radius)


# ---------------------------------------------------------------------------
# social demonstration data


def observed_track(script, t_now, n_obs=4, obs_dt=0.1):
    """Recent ground-truth positions as the forecaster would have seen."""
    times = t_now + obs_dt * (np.arange(n_obs) - (n_obs - 1))
    return PedestrianTrack(t=times, xy=script.sample(times))


def _stationary_script(x, y, t_end=60.0):
    return WaypointScript(t=np.array([-1.0, t_end]),
                          xy=np.array([[x, y], [x, y]]))


def _crossing_script(cx, y_from, y_to, speed, t_cross, t_end=60.0):
    """Walk a vertical line through (cx, midpoint) reaching it at t_cross."""
    span = abs(y_to - y_from)
    t0 = t_cross - abs((y_from + y_to) / 2.0 - y_from) / speed
    t1 = t0 + span / speed
    times = [t0 - 1.0, t0, t1, t_end]
    xy = [[cx, y_from - math.copysign(speed, y_to - y_from)], [cx, y_from],
          [cx, y_to], [cx, y_to]]
    order = np.argsort(times)
    times = np.array(times)[order]
    xy = np.array(xy)[order]
    keep = np.concatenate([[True], np.diff(times) > 1e-9])
    return WaypointScript(t=times[keep], xy=xy[keep])


def canonical_scenarios(world_size=10.0):
    """The matched pair used throughout: same task, a pedestrian that
    stands on the straight line vs one that crosses it."""
    mid = world_size / 2.0
    stationary = _stationary_script(mid, mid)
    crossing = _crossing_script(mid, 1.0, world_size - 1.0, speed=1.0, t_cross=4.0)
    return {"stationary": stationary, "crossing": crossing}


def _random_script(rng, world_size):
    """Draw a scenario from families whose expert response is single-sided.

    Every pedestrian placement keeps the governing forecast disc at or below
    the corridor, so interacting demonstrations always detour above by a
    smoothly varying amount. Mixing sides instead makes the expert flip its
    detour on near-ties, and a mean-predicting model trained on that bimodal
    set learns to split the difference: straight through the pedestrian.
    """
    mid = world_size / 2.0
    u = rng.random()
    if u < 0.45:
        # standing on or just under the corridor: detour height grows
        # smoothly as the pedestrian approaches the straight line
        x = float(rng.uniform(mid - 1.5, mid + 1.5))
        y = float(rng.uniform(mid - 1.0, mid))
        return "stationary", _stationary_script(x, y)
    if u < 0.85:
        # walking up through the corridor like the canonical crosser; the
        # timing band keeps the frozen last forecast disc below the corridor
        cx = float(rng.uniform(mid - 1.0, mid + 1.0))
        speed = float(rng.uniform(0.85, 1.15))
        t_cross = float(rng.uniform(3.4, 4.4))
        return "crossing", _crossing_script(cx, 1.0, world_size - 1.0, speed,
                                            t_cross)
    # remote bystander: the straight path already clears every disc
    x = float(rng.uniform(mid - 2.0, mid + 2.0))
    y = float(rng.uniform(1.0, mid - 2.5))
    return "stationary", _stationary_script(x, y)


def social_episode_inputs(script, grid, start_m, goal_m, horizon=8,
                          forecast_dt=0.4, r0=0.2, dr=0.05, d_safe=0.5,
                          expert_margin=0.2):
    """Forecast, condition, and expert demo for one scripted pedestrian.

    The expert plans against d_safe + expert_margin so the stored demos keep
    slack beyond the margin the trained planner is later held to; a model
    reproducing them within the buffer still clears d_safe.
    """
    track = observed_track(script, t_now=0.0)
    fc = constant_velocity_forecast(track, horizon=horizon, dt=forecast_dt,
                                    r0=r0, dr=dr)
    extent = grid.width * grid.cell_size
    start_cell = grid.cell_of_meters(start_m)
    goal_cell = grid.cell_of_meters(goal_m)
    traj, duration = spacetime_expert(grid, start_cell, goal_cell, fc,
                                      d_safe=d_safe + expert_margin)
    condition = build_condition(np.asarray(start_m), np.asarray(goal_m), fc, extent)
    return fc, condition, traj, duration


def generate_social_dataset(out_dir, count, seed, world_size=10.0, grid_size=64,
                            start=(1.0, 5.0), goal=(9.0, 5.0), horizon=8,
                            forecast_dt=0.4, r0=0.2, dr=0.05, d_safe=0.5,
                            expert_margin=0.2, t_ref=32.0, progress=None):
    """Scripted-pedestrian episodes with space-time expert demonstrations.

    Episodes 0 and 1 are always the canonical stationary/crossing pair; the
    rest randomize pedestrian placement, speed, and crossing time from the
    per-episode seed. Demo timestamps are normalized by t_ref. The recorded
    d_safe is the margin models trained on the set are held to; the expert
    keeps expert_margin extra on top of it (see social_episode_inputs).
    """
    if count < 2:
        raise ValueError("social datasets need at least 2 episodes")
    os.makedirs(out_dir, exist_ok=True)
    grid = rasterize_empty(grid_size, world_size / grid_size)
    save_pgm(os.path.join(out_dir, "grid.pgm"), grid)
    canon = canonical_scenarios(world_size)
    for i in range(count):
        if i == 0:
            kind, script = "stationary", canon["stationary"]
        elif i == 1:
            kind, script = "crossing", canon["crossing"]
        else:
            rng = np.random.default_rng(seed + i)
            kind, script = _random_script(rng, world_size)
        fc, condition, traj, duration = social_episode_inputs(
            script, grid, start, goal, horizon=horizon, forecast_dt=forecast_dt,
            r0=r0, dr=dr, d_safe=d_safe, expert_margin=expert_margin)
        if duration > t_ref:
            raise RuntimeError(f"episode {i} duration {duration} exceeds t_ref {t_ref}")
        scaled = Trajectory(t=traj.t * (duration / t_ref), xy=traj.xy,
                            smoothed=traj.smoothed)
        stem = os.path.join(out_dir, f"ep{i:05d}")
        save_trajectory_csv(stem + ".csv", scaled)
        save_forecast_csv(stem + ".fc.csv", fc)
        save_script_csv(stem + ".ped.csv", script)
        with open(stem + ".spec.txt", "w") as fh:
            fh.write(f"kind={kind}\n")
            fh.write(f"duration={duration!r}\n")
            fh.write(f"smoothed={int(traj.smoothed)}\n")
        if progress is not None:
            progress(i)
    manifest = {
        "version": "1",
        "generator": "socnav-social",
        "kind": "social",
        "seed": str(seed),
        "count": str(count),
        "grid_size": str(grid_size),
        "world_size": repr(world_size),
        "horizon": str(horizon),
        "forecast_dt": repr(forecast_dt),
        "r0": repr(r0),
        "dr": repr(dr),
        "d_safe": repr(d_safe),
        "expert_margin": repr(expert_margin),
        "t_ref": repr(t_ref),
        "start": f"{start[0]!r},{start[1]!r}",
        "goal": f"{goal[0]!r},{goal[1]!r}",
    }
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        for key, val in manifest.items():
            fh.write(f"{key}={val}\n")
    return manifest


class SocialEpisode:
    def __init__(self, index, kind, condition, trajectory, forecast, script,
                 duration, smoothed):
        self.index = index
        self.kind = kind
        self.condition = condition
        self.trajectory = trajectory
        self.forecast = forecast
        self.script = script
        self.duration = duration
        self.smoothed = smoothed


class SocialDataset:
    def __init__(self, manifest, grid, episodes):
        self.manifest = manifest
        self.grid = grid
        self.episodes = episodes

    def __len__(self):
        return len(self.episodes)

    def training_pairs(self):
        return [(ep.condition, ep.trajectory) for ep in self.episodes]


def load_social_dataset(directory):
    manifest = {}
    with open(os.path.join(directory, "manifest.txt")) as fh:
        for line in fh:
            line = line.strip()
            if line:
                key, _, val = line.partition("=")
                manifest[key] = val
    if manifest.get("kind") != "social":
        raise ValueError(f"{directory} is not a social dataset")
    count = int(manifest["count"])
    world_size = float(manifest["world_size"])
    grid_size = int(manifest["grid_size"])
    horizon = int(manifest["horizon"])
    forecast_dt = float(manifest["forecast_dt"])
    start = np.array([float(v) for v in manifest["start"].split(",")])
    goal = np.array([float(v) for v in manifest["goal"].split(",")])
    grid = load_pgm(os.path.join(directory, "grid.pgm"),
                    cell_size=world_size / grid_size)
    episodes = []
    for i in range(count):
        stem = os.path.join(directory, f"ep{i:05d}")
        values = {}
        with open(stem + ".spec.txt") as fh:
            for line in fh:
                key, _, val = line.strip().partition("=")
                values[key] = val
        fc = load_forecast_csv(stem + ".fc.csv", t0=0.0, dt=forecast_dt)
        traj = load_trajectory_csv(stem + ".csv",
                                   smoothed=bool(int(values.get("smoothed", 1))))
        script = load_script_csv(stem + ".ped.csv")
        condition = build_condition(start, goal, fc, world_size)
        episodes.append(SocialEpisode(i, values["kind"], condition, traj, fc,
                                      script, float(values["duration"]),
                                      bool(int(values.get("smoothed", 1)))))
    return SocialDataset(manifest, grid, episodes)
