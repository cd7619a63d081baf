"""2D kinematic simulator: a unicycle robot among scripted pedestrians.

The robot is velocity-controlled. Each tick the active policy maps the
world state to a velocity command; the simulator integrates the unicycle,
advances pedestrians along their scripts, and records a trace row. All
positions are in meters; the occupancy grid supplies static collision.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .forecast import WaypointScript, load_script_csv
from .world import load_pgm

TWO_PI = 2.0 * math.pi


@dataclass
class RobotState:
    x: float
    y: float
    theta: float
    v: float = 0.0
    omega: float = 0.0

    @property
    def position(self):
        return np.array([self.x, self.y])


@dataclass
class VelocityCommand:
    v: float
    omega: float
    emergency: bool = False


@dataclass
class MotionLimits:
    v_max: float = 1.0
    omega_max: float = 1.5
    accel: float = 0.5
    alpha: float = 2.0  # angular acceleration bound

    def __post_init__(self):
        for name in ("v_max", "omega_max", "accel", "alpha"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    def window(self, state, dt):
        """Reachable velocity box (v_lo, v_hi, w_lo, w_hi) after one tick."""
        v_lo = max(0.0, state.v - self.accel * dt)
        v_hi = min(self.v_max, state.v + self.accel * dt)
        w_lo = max(-self.omega_max, state.omega - self.alpha * dt)
        w_hi = min(self.omega_max, state.omega + self.alpha * dt)
        return v_lo, v_hi, w_lo, w_hi


def wrap_angle(theta):
    """Wrap to [-pi, pi)."""
    return (theta + math.pi) % TWO_PI - math.pi


@dataclass
class Scenario:
    """Static world plus robot task and pedestrian scripts."""

    grid: object
    start: np.ndarray  # meters
    goal: np.ndarray
    start_theta: float = 0.0
    pedestrians: list = field(default_factory=list)  # WaypointScript per pedestrian
    goal_radius: float = 0.2
    timeout: float = 60.0

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=np.float64)
        self.goal = np.asarray(self.goal, dtype=np.float64)
        if self.goal_radius <= 0.0 or self.timeout <= 0.0:
            raise ValueError("goal_radius and timeout must be positive")


class World:
    """Mutable episode state handed to policies each tick."""

    def __init__(self, scenario, dt=0.1, limits=None, personal_zone=0.45,
                 robot_radius=0.15):
        self.grid = scenario.grid
        self.goal = scenario.goal.copy()
        self.goal_radius = scenario.goal_radius
        self.pedestrians = list(scenario.pedestrians)
        self.robot = RobotState(x=float(scenario.start[0]), y=float(scenario.start[1]),
                                theta=float(scenario.start_theta))
        self.dt = float(dt)
        self.limits = limits if limits is not None else MotionLimits()
        self.personal_zone = personal_zone
        self.robot_radius = robot_radius
        self.clock = 0.0
        self.collided = False
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")

    def pedestrian_positions(self, t=None):
        """(n_peds, 2) pedestrian positions at time t (default: now)."""
        t = self.clock if t is None else t
        if not self.pedestrians:
            return np.zeros((0, 2))
        return np.stack([script.sample(t) for script in self.pedestrians])

    def min_pedestrian_distance(self):
        peds = self.pedestrian_positions()
        if len(peds) == 0:
            return math.inf
        return float(np.min(np.linalg.norm(peds - self.robot.position, axis=1)))

    def at_goal(self):
        return float(np.linalg.norm(self.robot.position - self.goal)) <= self.goal_radius


def step(world, command):
    """Advance one tick under a velocity command.

    Non-emergency commands must lie inside the reachable window (contract
    error otherwise). Emergency commands brake as hard as the limits allow.
    Integration is forward Euler on the unicycle: the position update uses
    the heading from the start of the tick.
    """
    robot = world.robot
    dt = world.dt
    v_lo, v_hi, w_lo, w_hi = world.limits.window(robot, dt)
    if command.emergency:
        # brake toward zero as fast as the window allows
        v = min(max(0.0, v_lo), v_hi)
        omega = min(max(0.0, w_lo), w_hi)
    else:
        v, omega = float(command.v), float(command.omega)
        if not (v_lo - 1e-9 <= v <= v_hi + 1e-9) or not (w_lo - 1e-9 <= omega <= w_hi + 1e-9):
            raise ValueError(
                f"command ({v:.3f}, {omega:.3f}) outside window "
                f"v=[{v_lo:.3f}, {v_hi:.3f}] w=[{w_lo:.3f}, {w_hi:.3f}]")
    robot.x += v * math.cos(robot.theta) * dt
    robot.y += v * math.sin(robot.theta) * dt
    robot.theta = wrap_angle(robot.theta + omega * dt)
    robot.v = v
    robot.omega = omega
    world.clock += dt
    r, c = world.grid.cell_of_meters((robot.x, robot.y))
    if world.grid.cells[r, c]:
        world.collided = True
    return world


@dataclass
class Trace:
    """Per-tick arrays recorded over an episode."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    min_ped_dist: np.ndarray
    ped_xy: np.ndarray  # (ticks, n_peds, 2)

    def __len__(self):
        return self.t.size


@dataclass
class EpisodeRollout:
    trace: Trace
    success: bool
    timed_out: bool
    collided: bool
    emergency_stops: int


def run_episode(scenario, policy, dt=0.1, limits=None, personal_zone=0.45,
                robot_radius=0.15):
    """Drive the policy until the goal, a collision, or the timeout.

    policy: callable(world) -> VelocityCommand. The trace includes the
    initial state at t = 0 and one row per completed tick.
    """
    world = World(scenario, dt=dt, limits=limits, personal_zone=personal_zone,
                  robot_radius=robot_radius)
    rows = []
    peds = []
    emergencies = 0

    def record():
        rows.append((world.clock, world.robot.x, world.robot.y, world.robot.theta,
                     world.robot.v, world.robot.omega, world.min_pedestrian_distance()))
        peds.append(world.pedestrian_positions())

    record()
    success = world.at_goal()
    timed_out = False
    while not success and not world.collided:
        if world.clock >= scenario.timeout:
            timed_out = True
            break
        command = policy(world)
        if command.emergency:
            emergencies += 1
        step(world, command)
        record()
        success = world.at_goal()
    data = np.array(rows, dtype=np.float64)
    trace = Trace(t=data[:, 0], x=data[:, 1], y=data[:, 2], theta=data[:, 3],
                  v=data[:, 4], omega=data[:, 5], min_ped_dist=data[:, 6],
                  ped_xy=np.stack(peds) if peds and len(peds[0]) else np.zeros((len(rows), 0, 2)))
    return EpisodeRollout(trace=trace, success=success, timed_out=timed_out,
                          collided=world.collided, emergency_stops=emergencies)


@dataclass
class EpisodeMetrics:
    success: bool
    duration: float
    path_length: float
    straight_ratio: float
    min_ped_dist: float
    intrusion_ticks: int

    def as_dict(self):
        return {
            "success": str(int(self.success)),
            "duration": f"{self.duration:.17g}",
            "path_length": f"{self.path_length:.17g}",
            "straight_ratio": f"{self.straight_ratio:.17g}",
            "min_ped_dist": f"{self.min_ped_dist:.17g}",
            "intrusion_ticks": str(self.intrusion_ticks),
        }


def compute_metrics(rollout, personal_zone=0.45):
    """Safety and efficiency summary of one episode."""
    trace = rollout.trace
    xy = np.stack([trace.x, trace.y], axis=1)
    steps_len = np.linalg.norm(np.diff(xy, axis=0), axis=1)
    path_length = float(np.sum(steps_len))
    displacement = float(np.linalg.norm(xy[-1] - xy[0]))
    straight_ratio = path_length / displacement if displacement > 1e-9 else 1.0
    min_ped = float(np.min(trace.min_ped_dist)) if len(trace) else math.inf
    intrusions = int(np.sum(trace.min_ped_dist < personal_zone))
    return EpisodeMetrics(success=rollout.success, duration=float(trace.t[-1]),
                          path_length=path_length, straight_ratio=straight_ratio,
                          min_ped_dist=min_ped, intrusion_ticks=intrusions)


def save_trace_csv(path, trace):
    with open(path, "w") as fh:
        fh.write("t,x,y,theta,v,omega,minPedDist\n")
        for i in range(len(trace)):
            fh.write(",".join(f"{val:.17g}" for val in
                              (trace.t[i], trace.x[i], trace.y[i], trace.theta[i],
                               trace.v[i], trace.omega[i], trace.min_ped_dist[i])) + "\n")


def save_metrics(path, metrics):
    with open(path, "w") as fh:
        for key, val in metrics.as_dict().items():
            fh.write(f"{key}={val}\n")


def save_scenario(path, world_size, grid_file, start, start_theta, goal,
                  ped_files=(), goal_radius=0.2, timeout=60.0):
    lines = [
        f"world_size={world_size!r}",
        f"grid={grid_file}",
        f"start={start[0]!r},{start[1]!r}",
        f"start_theta={start_theta!r}",
        f"goal={goal[0]!r},{goal[1]!r}",
        f"goal_radius={goal_radius!r}",
        f"timeout={timeout!r}",
    ]
    lines.extend(f"pedestrian={p}" for p in ped_files)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scenario(path):
    """Scenario from a key=value file; grid and script paths are relative."""
    import os

    base = os.path.dirname(os.path.abspath(path))
    values = {}
    ped_files = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            if key == "pedestrian":
                ped_files.append(val)
            else:
                values[key] = val
    required = ("world_size", "grid", "start", "goal")
    for key in required:
        if key not in values:
            raise ValueError(f"scenario file missing key '{key}': {path}")
    world_size = float(values["world_size"])
    grid_path = os.path.join(base, values["grid"])
    grid = load_pgm(grid_path, cell_size=1.0)
    grid.cell_size = world_size / grid.width
    start = np.array([float(v) for v in values["start"].split(",")])
    goal = np.array([float(v) for v in values["goal"].split(",")])
    peds = [load_script_csv(os.path.join(base, p)) for p in ped_files]
    return Scenario(grid=grid, start=start, goal=goal,
                    start_theta=float(values.get("start_theta", 0.0)),
                    pedestrians=peds,
                    goal_radius=float(values.get("goal_radius", 0.2)),
                    timeout=float(values.get("timeout", 60.0)))
