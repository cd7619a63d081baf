"""Grid representation, rasterization, coordinate transforms, and PGM IO."""

import numpy as np
import pytest

from socnav import world
from socnav.trajectory import Trajectory


def grid_from(array, cell_size=1.0):
    return world.EnvironmentGrid(cells=np.asarray(array, dtype=np.uint8),
                                 cell_size=cell_size)


def random_grid(seed, size=12, density=0.25):
    rng = np.random.default_rng(seed)
    return grid_from((rng.random((size, size)) < density).astype(np.uint8))


def test_bar_footprint_cells():
    bar = world.Bar(anchor=(2, 3), orientation="h", length=4, thickness=2)
    assert bar.footprint() == (2, 3, 3, 6)
    bar = world.Bar(anchor=(1, 1), orientation="v", length=3, thickness=1)
    assert bar.footprint() == (1, 1, 3, 1)
    with pytest.raises(ValueError):
        world.Bar((0, 0), "x", 2, 1).footprint()


def test_rasterize_marks_exactly_the_footprints():
    spec = world.EnvironmentSpec(
        grid_size=10, world_size=5.0,
        obstacles=[world.Bar((1, 1), "h", 3, 1), world.Bar((5, 6), "v", 4, 2)],
        start=(0, 0), goal=(9, 9))
    grid = world.rasterize(spec)
    expected = np.zeros((10, 10), dtype=np.uint8)
    for bar in spec.obstacles:
        r0, c0, r1, c1 = bar.footprint()
        expected[r0:r1 + 1, c0:c1 + 1] = 1
    assert np.array_equal(grid.cells, expected)
    assert grid.cell_size == 0.5


def test_spec_validation():
    with pytest.raises(ValueError):
        world.EnvironmentSpec(grid_size=10, world_size=5.0, obstacles=[],
                              start=(0, 0), goal=(0, 0))
    with pytest.raises(ValueError):
        world.EnvironmentSpec(grid_size=10, world_size=5.0, obstacles=[],
                              start=(-1, 0), goal=(3, 3))
    with pytest.raises(ValueError):
        world.EnvironmentSpec(
            grid_size=10, world_size=5.0,
            obstacles=[world.Bar((8, 8), "h", 5, 1)], start=(0, 0), goal=(3, 3))


def test_coordinate_transforms_roundtrip():
    grid = grid_from(np.zeros((8, 8)), cell_size=1.25)
    # cell centers land back on their own cell in both coordinate systems
    for cell in [(0, 0), (3, 5), (7, 7)]:
        assert grid.cell_of_norm(grid.center_norm(cell)) == cell
        assert grid.cell_of_meters(grid.center_meters(cell)) == cell
    # hand-checked values: col maps to x, row to y, half-cell offset
    assert np.allclose(grid.center_norm((0, 0)), [0.0625, 0.0625])
    assert np.allclose(grid.center_meters((2, 5)), [5.5 * 1.25, 2.5 * 1.25])
    assert grid.world_extent == (10.0, 10.0)
    # points on the far boundary clamp into the last cell
    assert grid.cell_of_norm((1.0, 1.0)) == (7, 7)
    assert grid.cell_of_meters((10.0, 10.0)) == (7, 7)


def test_inflate_matches_brute_force_dilation():
    for seed in range(10):
        grid = random_grid(seed)
        got = world.inflate(grid, cells=1)
        n = grid.height
        expected = np.zeros_like(grid.cells)
        for r in range(n):
            for c in range(n):
                r0, r1 = max(0, r - 1), min(n, r + 2)
                c0, c1 = max(0, c - 1), min(n, c + 2)
                expected[r, c] = grid.cells[r0:r1, c0:c1].max()
        assert np.array_equal(got.cells, expected)
    # radius 2 dilation equals applying radius 1 twice
    grid = random_grid(11)
    twice = world.inflate(world.inflate(grid, 1), 1)
    assert np.array_equal(world.inflate(grid, 2).cells, twice.cells)


def test_distance_field_matches_loop_oracle():
    grid = random_grid(3, size=9)
    field = world.distance_field(grid)
    occ = np.argwhere(grid.cells == 1)
    for r in range(grid.height):
        for c in range(grid.width):
            p = grid.center_meters((r, c))
            best = min(np.linalg.norm(p - grid.center_meters((ro, co)))
                       for ro, co in occ)
            assert abs(field[r, c] - best) < 1e-12
    empty = grid_from(np.zeros((4, 4)))
    assert np.all(np.isinf(world.distance_field(empty)))


def test_trajectory_collision_check():
    cells = np.zeros((10, 10), dtype=np.uint8)
    cells[4:6, 4:6] = 1
    grid = grid_from(cells)
    t = np.linspace(0, 1, 50)
    through = Trajectory(t=t, xy=np.stack([t * 0.98 + 0.01, t * 0.98 + 0.01], axis=1))
    assert world.trajectory_collides(through, grid)
    along_edge = Trajectory(t=t, xy=np.stack([t * 0.98 + 0.01, np.full_like(t, 0.05)], axis=1))
    assert not world.trajectory_collides(along_edge, grid)


def test_pgm_roundtrip_and_format(tmp_path):
    grid = random_grid(5)
    path = tmp_path / "g.pgm"
    world.save_pgm(path, grid)
    text = path.read_text()
    lines = text.splitlines()
    assert lines[0] == "P2"
    assert lines[1].split() == [str(grid.width), str(grid.height)]
    assert lines[2] == "255"
    body = np.array([int(v) for v in " ".join(lines[3:]).split()])
    assert set(np.unique(body)) <= {0, 255}
    loaded = world.load_pgm(path, cell_size=grid.cell_size)
    assert np.array_equal(loaded.cells, grid.cells)
    assert loaded.cell_size == grid.cell_size


def test_pgm_loader_handles_comments_and_linebreaks(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_text("P2\n# a comment\n3 2\n255\n255 0\n0 # trailing\n0 255 0\n")
    grid = world.load_pgm(path)
    assert np.array_equal(grid.cells, [[1, 0, 0], [0, 1, 0]])
    bad = tmp_path / "bad.pgm"
    bad.write_text("P5\n3 2\n255\n0 0 0 0 0 0\n")
    with pytest.raises(ValueError):
        world.load_pgm(bad)


def test_free_cells_listing():
    cells = np.zeros((3, 3), dtype=np.uint8)
    cells[1, 1] = 1
    grid = grid_from(cells)
    free = set(map(tuple, world.free_cells(grid)))
    assert (1, 1) not in free and len(free) == 8
