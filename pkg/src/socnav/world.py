"""Occupancy grids, environment specs, rasterization, and PGM persistence.

Conventions used across the package:
  - grid cells are indexed (row, col) with row 0 the top row (PGM order);
  - cell (r, c) has its center at normalized coords ((c + .5)/W, (r + .5)/H);
  - metric positions are (x, y) with x along columns, y along rows, so
    meters = cells * cell_size; normalized = meters / (extent * cell_size).
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Bar:
    """Axis-aligned rectangular obstacle, anchored at its top-left cell."""

    anchor: tuple  # (row, col)
    orientation: str  # "h" or "v": direction the length runs
    length: int
    thickness: int

    def footprint(self):
        """(r0, c0, r1, c1) inclusive cell bounds."""
        r, c = self.anchor
        if self.orientation == "h":
            return r, c, r + self.thickness - 1, c + self.length - 1
        if self.orientation == "v":
            return r, c, r + self.length - 1, c + self.thickness - 1
        raise ValueError(f"bad orientation {self.orientation!r}")


@dataclass
class EnvironmentSpec:
    """World bounds, obstacle bars, and free start/goal cells."""

    grid_size: int
    world_size: float  # meters across the full grid
    obstacles: list
    start: tuple  # (row, col)
    goal: tuple

    def __post_init__(self):
        if self.start == self.goal:
            raise ValueError("start and goal must differ")
        for cell in (self.start, self.goal):
            if not (0 <= cell[0] < self.grid_size and 0 <= cell[1] < self.grid_size):
                raise ValueError(f"cell {cell} outside grid bounds")
        for bar in self.obstacles:
            r0, c0, r1, c1 = bar.footprint()
            if r0 < 0 or c0 < 0 or r1 >= self.grid_size or c1 >= self.grid_size:
                raise ValueError(f"obstacle {bar} outside grid bounds")

    @property
    def cell_size(self):
        return self.world_size / self.grid_size


@dataclass
class EnvironmentGrid:
    """Binary occupancy raster; 1 = obstacle."""

    cells: np.ndarray
    cell_size: float = 1.0

    def __post_init__(self):
        self.cells = np.asarray(self.cells)
        if self.cells.ndim != 2:
            raise ValueError("grid cells must be 2D")
        if not np.all((self.cells == 0) | (self.cells == 1)):
            raise ValueError("grid cells must be 0 or 1")
        self.cells = self.cells.astype(np.uint8)

    @property
    def height(self):
        return self.cells.shape[0]

    @property
    def width(self):
        return self.cells.shape[1]

    @property
    def world_extent(self):
        """(x_extent, y_extent) in meters."""
        return self.width * self.cell_size, self.height * self.cell_size

    def is_free_cell(self, r, c):
        return 0 <= r < self.height and 0 <= c < self.width and self.cells[r, c] == 0

    def cell_of_norm(self, xy):
        """Cell (r, c) containing a normalized (x, y) point, clipped to bounds."""
        x, y = xy
        c = min(max(int(x * self.width), 0), self.width - 1)
        r = min(max(int(y * self.height), 0), self.height - 1)
        return r, c

    def cell_of_meters(self, xy):
        x, y = xy
        c = min(max(int(x / self.cell_size), 0), self.width - 1)
        r = min(max(int(y / self.cell_size), 0), self.height - 1)
        return r, c

    def center_norm(self, cell):
        r, c = cell
        return np.array([(c + 0.5) / self.width, (r + 0.5) / self.height])

    def center_meters(self, cell):
        r, c = cell
        return np.array([(c + 0.5) * self.cell_size, (r + 0.5) * self.cell_size])


def rasterize(spec):
    """Burn the spec's obstacle bars into a fresh grid. The grid never
    contains the demonstration trajectory, only the static environment."""
    cells = np.zeros((spec.grid_size, spec.grid_size), dtype=np.uint8)
    for bar in spec.obstacles:
        r0, c0, r1, c1 = bar.footprint()
        if r0 < 0 or c0 < 0 or r1 >= spec.grid_size or c1 >= spec.grid_size:
            raise ValueError(f"obstacle {bar} outside grid bounds")
        cells[r0 : r1 + 1, c0 : c1 + 1] = 1
    return EnvironmentGrid(cells=cells, cell_size=spec.cell_size)


def rasterize_empty(grid_size, cell_size=1.0):
    """Obstacle-free grid of the given size."""
    return EnvironmentGrid(cells=np.zeros((grid_size, grid_size), dtype=np.uint8),
                           cell_size=cell_size)


def inflate(grid, cells=1):
    """Dilate the obstacle set by `cells` in the 8-neighborhood sense."""
    occ = grid.cells.astype(bool)
    for _ in range(cells):
        padded = np.pad(occ, 1)
        grown = np.zeros_like(occ)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                grown |= padded[1 + dr : 1 + dr + occ.shape[0], 1 + dc : 1 + dc + occ.shape[1]]
        occ = grown
    return EnvironmentGrid(cells=occ.astype(np.uint8), cell_size=grid.cell_size)


def free_cells(grid):
    """(n, 2) array of free (r, c) cells in row-major order."""
    rows, cols = np.nonzero(grid.cells == 0)
    return np.stack([rows, cols], axis=1)


def trajectory_collides(traj, grid):
    """True if any normalized trajectory sample lands in an occupied cell."""
    for xy in traj.xy:
        r, c = grid.cell_of_norm(xy)
        if grid.cells[r, c]:
            return True
    return False


def distance_field(grid):
    """Meters from each cell center to the nearest occupied cell center.

    Occupied cells read 0; a grid with no obstacles reads +inf everywhere.
    Computed by brute force against the occupied set, which is fast at the
    grid sizes used here and exact.
    """
    occ = np.argwhere(grid.cells == 1)
    h, w = grid.cells.shape
    if len(occ) == 0:
        return np.full((h, w), np.inf)
    rows = np.arange(h)[:, None, None]
    cols = np.arange(w)[None, :, None]
    dr = rows - occ[None, None, :, 0]
    dc = cols - occ[None, None, :, 1]
    dist = np.sqrt(np.min(dr * dr + dc * dc, axis=2).astype(np.float64))
    return dist * grid.cell_size


def save_pgm(path, grid):
    """ASCII PGM (P2), maxval 255, occupied = 255, free = 0, top row first."""
    lines = ["P2", f"{grid.width} {grid.height}", "255"]
    for row in grid.cells:
        lines.append(" ".join("255" if v else "0" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def save_pgm_gray(path, values):
    """ASCII PGM of arbitrary 0..255 values (overlay images)."""
    values = np.asarray(values)
    if values.ndim != 2 or values.min() < 0 or values.max() > 255:
        raise ValueError("gray image must be 2D with values in 0..255")
    h, w = values.shape
    lines = ["P2", f"{w} {h}", "255"]
    for row in values.astype(np.int64):
        lines.append(" ".join(str(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_pgm(path, cell_size=1.0):
    with open(path) as fh:
        tokens = []
        for line in fh:
            hash_pos = line.find("#")
            if hash_pos >= 0:
                line = line[:hash_pos]
            tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"not an ASCII PGM file: {path}")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    values = np.array(tokens[4 : 4 + width * height], dtype=np.int64)
    if values.size != width * height:
        raise ValueError(f"PGM pixel count mismatch in {path}")
    cells = (values.reshape(height, width) > maxval // 2).astype(np.uint8)
    return EnvironmentGrid(cells=cells, cell_size=cell_size)
