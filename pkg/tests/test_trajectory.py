"""Trajectory container, interpolation, and CSV round trips."""

import numpy as np
import pytest

from socnav import trajectory as tj


def line(n=10, x0=0.1, x1=0.9, y=0.5):
    t = np.linspace(0.0, 1.0, n)
    xy = np.stack([x0 + (x1 - x0) * t, np.full_like(t, y)], axis=1)
    return tj.Trajectory(t=t, xy=xy)


def test_validation():
    t = np.linspace(0, 1, 5)
    xy = np.zeros((5, 2))
    tj.Trajectory(t=t, xy=xy)
    with pytest.raises(ValueError):
        tj.Trajectory(t=np.array([0.0, 0.5, 0.5, 1.0]), xy=np.zeros((4, 2)))
    with pytest.raises(ValueError):
        tj.Trajectory(t=np.array([0.0, 1.5]), xy=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        tj.Trajectory(t=t, xy=np.zeros((5, 3)))


def test_sample_interpolates_and_clamps():
    traj = line()
    assert np.allclose(traj.sample(0.5), [0.5, 0.5])
    assert np.allclose(traj.sample(0.0), [0.1, 0.5])
    # vector queries keep their shape
    out = traj.sample(np.array([0.0, 0.25, 1.0]))
    assert out.shape == (3, 2)
    assert np.allclose(out[1], [0.3, 0.5])


def test_path_length():
    traj = line(x0=0.2, x1=0.7)
    assert abs(traj.path_length() - 0.5) < 1e-12
    # an L-shaped path sums both legs
    t = np.array([0.0, 0.5, 1.0])
    xy = np.array([[0.0, 0.0], [0.3, 0.0], [0.3, 0.4]])
    assert abs(tj.Trajectory(t=t, xy=xy).path_length() - 0.7) < 1e-12


def test_csv_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(0)
    t = np.sort(rng.random(20))
    t[0], t[-1] = 0.0, 1.0
    traj = tj.Trajectory(t=t, xy=rng.random((20, 2)))
    path = tmp_path / "t.csv"
    tj.save_trajectory_csv(path, traj)
    loaded = tj.load_trajectory_csv(path)
    assert np.array_equal(loaded.t, traj.t)
    assert np.array_equal(loaded.xy, traj.xy)
    assert loaded.smoothed
    flagged = tj.load_trajectory_csv(path, smoothed=False)
    assert not flagged.smoothed
