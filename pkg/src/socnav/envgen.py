"""Synthetic demonstration data: random environments, an optimal grid
planner standing in for the human demonstrator, and polynomial smoothing
that turns jagged cell paths into natural-looking trajectories.

A dataset on disk is a manifest plus, per episode: a spec file (key=value),
a PGM occupancy grid, and a trajectory CSV. Everything is generated from
per-episode seeds (seed + index) so episodes are reproducible in isolation
and whole datasets are byte-identical across reruns.
"""

import heapq
import os

import numpy as np

from .trajectory import Trajectory, load_trajectory_csv, save_trajectory_csv
from .world import (Bar, EnvironmentGrid, EnvironmentSpec, free_cells, inflate,
                    load_pgm, rasterize, save_pgm)

SQRT2 = float(np.sqrt(2.0))

_NEIGHBORS = ((-1, -1, SQRT2), (-1, 0, 1.0), (-1, 1, SQRT2),
              (0, -1, 1.0), (0, 1, 1.0),
              (1, -1, SQRT2), (1, 0, 1.0), (1, 1, SQRT2))


class NoPathError(RuntimeError):
    """Start and goal are not connected on the given grid."""


def octile(a, b):
    """Admissible 8-connected distance lower bound."""
    dr = abs(a[0] - b[0])
    dc = abs(a[1] - b[1])
    lo, hi = (dr, dc) if dr < dc else (dc, dr)
    return (hi - lo) + SQRT2 * lo


def astar_plan(grid, start, goal):
    """Optimal 8-connected path on the occupancy grid.

    Straight moves cost 1, diagonal moves sqrt(2). Ties are broken on
    (f, h, row, col) so the returned path is a deterministic function of
    the inputs. Returns (path, cost); raises NoPathError when disconnected.
    """
    start = tuple(int(v) for v in start)
    goal = tuple(int(v) for v in goal)
    for name, cell in (("start", start), ("goal", goal)):
        if not grid.is_free_cell(*cell):
            raise ValueError(f"{name} cell {cell} is not free")
    if start == goal:
        return [start], 0.0

    g = {start: 0.0}
    parent = {start: None}
    closed = set()
    h0 = octile(start, goal)
    heap = [(h0, h0, start[0], start[1])]
    while heap:
        f, h, r, c = heapq.heappop(heap)
        cell = (r, c)
        if cell in closed:
            continue
        closed.add(cell)
        if cell == goal:
            path = []
            while cell is not None:
                path.append(cell)
                cell = parent[cell]
            path.reverse()
            return path, g[goal]
        for dr, dc, move_cost in _NEIGHBORS:
            nxt = (r + dr, c + dc)
            if not grid.is_free_cell(*nxt) or nxt in closed:
                continue
            cand = g[cell] + move_cost
            if cand < g.get(nxt, np.inf) - 1e-12:
                g[nxt] = cand
                parent[nxt] = cell
                hn = octile(nxt, goal)
                heapq.heappush(heap, (cand + hn, hn, nxt[0], nxt[1]))
    raise NoPathError(f"no path from {start} to {goal}")


def _bars_disjoint(a, b, gap):
    """True when the two footprints are at least `gap` cells apart."""
    ar0, ac0, ar1, ac1 = a.footprint()
    br0, bc0, br1, bc1 = b.footprint()
    return (ar1 + gap < br0 or br1 + gap < ar0 or
            ac1 + gap < bc0 or bc1 + gap < ac0)


def rasterize_bars(bars, grid_size, cell_size):
    cells = np.zeros((grid_size, grid_size), dtype=np.uint8)
    for bar in bars:
        r0, c0, r1, c1 = bar.footprint()
        cells[r0 : r1 + 1, c0 : c1 + 1] = 1
    return EnvironmentGrid(cells=cells, cell_size=cell_size)


def generate_environment(rng, grid_size=64, n_obstacles=2, world_size=10.0,
                         min_length=12, max_length=44, min_thickness=2,
                         max_thickness=4, min_separation=None, max_tries=100):
    """Random bars plus free start/goal cells with a guaranteed path.

    The path check runs on the 1-cell inflated grid, so downstream planning
    with the same inflation cannot dead-end. Raises RuntimeError after
    max_tries rejected layouts.
    """
    if min_separation is None:
        min_separation = 0.45 * grid_size
    # bars must leave a free border cell on each side
    max_length = min(max_length, grid_size - 2)
    min_length = min(min_length, max_length)
    cell_size = world_size / grid_size
    for _ in range(max_tries):
        bars = []
        layout_ok = True
        for _ in range(n_obstacles):
            placed = False
            for _ in range(50):
                orientation = "h" if rng.integers(0, 2) == 0 else "v"
                length = int(rng.integers(min_length, max_length + 1))
                thickness = int(rng.integers(min_thickness, max_thickness + 1))
                if orientation == "h":
                    h_ext, w_ext = thickness, length
                else:
                    h_ext, w_ext = length, thickness
                r = int(rng.integers(1, grid_size - h_ext))
                c = int(rng.integers(1, grid_size - w_ext))
                bar = Bar((r, c), orientation, length, thickness)
                if all(_bars_disjoint(bar, other, gap=4) for other in bars):
                    bars.append(bar)
                    placed = True
                    break
            if not placed:
                layout_ok = False
                break
        if not layout_ok:
            continue
        grid = rasterize_bars(bars, grid_size, cell_size)
        inflated = inflate(grid, 1)
        free = free_cells(inflated)
        start = tuple(int(v) for v in free[rng.integers(len(free))])
        endpoints = None
        for _ in range(50):
            goal = tuple(int(v) for v in free[rng.integers(len(free))])
            if np.hypot(goal[0] - start[0], goal[1] - start[1]) >= min_separation:
                endpoints = (start, goal)
                break
        if endpoints is None:
            continue
        try:
            astar_plan(inflated, start, goal)
        except NoPathError:
            continue
        return EnvironmentSpec(grid_size=grid_size, world_size=world_size,
                               obstacles=bars, start=start, goal=goal)
    raise RuntimeError(f"no feasible environment after {max_tries} tries")


def path_to_points(path, grid):
    """Normalized (x, y) cell centers along a cell path."""
    return np.stack([grid.center_norm(cell) for cell in path])


def fit_path_polynomial(points, degree):
    """Independent least-squares fits x(t), y(t) over uniform t in [0, 1].

    Returns (fx, fy, rss) where rss is the total squared residual at the
    input points. Degree is clamped to len(points) - 1; at the clamp the
    fit interpolates.
    """
    n = len(points)
    t = np.linspace(0.0, 1.0, n)
    deg = min(int(degree), n - 1)
    fx = np.polynomial.Polynomial.fit(t, points[:, 0], deg)
    fy = np.polynomial.Polynomial.fit(t, points[:, 1], deg)
    rss = float(np.sum((fx(t) - points[:, 0]) ** 2) + np.sum((fy(t) - points[:, 1]) ** 2))
    return fx, fy, rss


def polynomial_residual(path, grid, degree):
    """Residual sum of squares of the raw fit at the path points."""
    return fit_path_polynomial(path_to_points(path, grid), degree)[2]


def _pin_endpoints(xy, t, p0, p1):
    """Blend a linear correction so the curve hits both endpoints exactly."""
    w = t[:, None]
    return xy + (1.0 - w) * (p0 - xy[0]) + w * (p1 - xy[-1])


def _polyline_resample(points, n_samples):
    t_in = np.linspace(0.0, 1.0, len(points))
    t_out = np.linspace(0.0, 1.0, n_samples)
    x = np.interp(t_out, t_in, points[:, 0])
    y = np.interp(t_out, t_in, points[:, 1])
    return np.stack([x, y], axis=1)


def _points_collide(xy, grid):
    for p in xy:
        r, c = grid.cell_of_norm(p)
        if grid.cells[r, c]:
            return True
    return False


def smooth_polynomial(path, grid, degree=5, n_samples=100, max_degree=10,
                      fallback=True, check=None):
    """Fit low-degree polynomials to a cell path and resample uniformly.

    Endpoints are pinned exactly via a linear blend on top of the fit. If
    the curve intersects `check` (default: `grid`), the degree is raised one
    step at a time up to max_degree; if every degree collides the unsmoothed
    resampled polyline is returned with smoothed=False (or ValueError if
    fallback is disabled).
    """
    if len(path) < 2:
        raise ValueError("path must contain at least 2 cells")
    if check is None:
        check = grid
    points = path_to_points(path, grid)
    t_out = np.linspace(0.0, 1.0, n_samples)
    for deg in range(int(degree), max_degree + 1):
        fx, fy, _ = fit_path_polynomial(points, deg)
        xy = np.stack([fx(t_out), fy(t_out)], axis=1)
        xy = _pin_endpoints(xy, t_out, points[0], points[-1])
        if not _points_collide(xy, check):
            return Trajectory(t=t_out, xy=xy, smoothed=True)
    if not fallback:
        raise ValueError(f"smoothing collides up to degree {max_degree}")
    xy = _polyline_resample(points, n_samples)
    return Trajectory(t=t_out, xy=xy, smoothed=False)


def generate_episode(index, seed, grid_size=64, n_obstacles=2, world_size=10.0,
                     degree=5, n_samples=100):
    """One (spec, grid, trajectory) triple from its own derived seed."""
    rng = np.random.default_rng(seed + index)
    spec = generate_environment(rng, grid_size=grid_size, n_obstacles=n_obstacles,
                                world_size=world_size)
    grid = rasterize(spec)
    inflated = inflate(grid, 1)
    path, cost = astar_plan(inflated, spec.start, spec.goal)
    try:
        # prefer a curve that clears the inflated obstacles, like the path
        traj = smooth_polynomial(path, grid, degree=degree, n_samples=n_samples,
                                 check=inflated, fallback=False)
    except ValueError:
        traj = smooth_polynomial(path, grid, degree=degree, n_samples=n_samples,
                                 check=grid)
    return spec, grid, traj, cost


def _format_bar(bar):
    r, c = bar.anchor
    return f"{bar.orientation}:{r}:{c}:{bar.length}:{bar.thickness}"


def _parse_bar(text):
    orientation, r, c, length, thickness = text.split(":")
    return Bar((int(r), int(c)), orientation, int(length), int(thickness))


def write_spec_file(path, spec, smoothed, cost):
    lines = [
        f"grid_size={spec.grid_size}",
        f"world_size={spec.world_size!r}",
        "obstacles=" + ";".join(_format_bar(b) for b in spec.obstacles),
        f"start={spec.start[0]},{spec.start[1]}",
        f"goal={spec.goal[0]},{spec.goal[1]}",
        f"smoothed={int(smoothed)}",
        f"expert_cost={cost!r}",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_spec_file(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            values[key] = val
    bars = [_parse_bar(b) for b in values["obstacles"].split(";") if b]
    start = tuple(int(v) for v in values["start"].split(","))
    goal = tuple(int(v) for v in values["goal"].split(","))
    spec = EnvironmentSpec(grid_size=int(values["grid_size"]),
                           world_size=float(values["world_size"]),
                           obstacles=bars, start=start, goal=goal)
    return spec, bool(int(values.get("smoothed", 1))), float(values.get("expert_cost", 0.0))


def generate_dataset(out_dir, count, seed, grid_size=64, n_obstacles=2,
                     world_size=10.0, degree=5, n_samples=100, progress=None):
    """Write `count` episodes plus a manifest under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    for i in range(count):
        spec, grid, traj, cost = generate_episode(
            i, seed, grid_size=grid_size, n_obstacles=n_obstacles,
            world_size=world_size, degree=degree, n_samples=n_samples)
        stem = os.path.join(out_dir, f"ep{i:05d}")
        save_pgm(stem + ".pgm", grid)
        save_trajectory_csv(stem + ".csv", traj)
        write_spec_file(stem + ".spec.txt", spec, traj.smoothed, cost)
        if progress is not None:
            progress(i)
    manifest = {
        "version": "1",
        "generator": "socnav-envgen",
        "seed": str(seed),
        "count": str(count),
        "grid_size": str(grid_size),
        "n_obstacles": str(n_obstacles),
        "world_size": repr(world_size),
        "degree": str(degree),
        "n_samples": str(n_samples),
    }
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        for key, val in manifest.items():
            fh.write(f"{key}={val}\n")
    return manifest


class EpisodeRecord:
    def __init__(self, index, spec, grid_path, traj_path, smoothed, cost):
        self.index = index
        self.spec = spec
        self.grid_path = grid_path
        self.traj_path = traj_path
        self.smoothed = smoothed
        self.cost = cost

    def load_grid(self):
        return load_pgm(self.grid_path, cell_size=self.spec.cell_size)

    def load_trajectory(self):
        return load_trajectory_csv(self.traj_path, smoothed=self.smoothed)


class Dataset:
    def __init__(self, manifest, episodes):
        self.manifest = manifest
        self.episodes = episodes

    def __len__(self):
        return len(self.episodes)


def load_dataset(directory):
    """Read a manifest and all episode records; verifies the count."""
    manifest_path = os.path.join(directory, "manifest.txt")
    manifest = {}
    with open(manifest_path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                key, _, val = line.partition("=")
                manifest[key] = val
    count = int(manifest["count"])
    episodes = []
    for i in range(count):
        stem = os.path.join(directory, f"ep{i:05d}")
        for suffix in (".pgm", ".csv", ".spec.txt"):
            if not os.path.exists(stem + suffix):
                raise FileNotFoundError(f"dataset episode file missing: {stem + suffix}")
        spec, smoothed, cost = read_spec_file(stem + ".spec.txt")
        episodes.append(EpisodeRecord(i, spec, stem + ".pgm", stem + ".csv",
                                      smoothed, cost))
    return Dataset(manifest, episodes)
