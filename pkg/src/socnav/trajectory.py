"""Time-stamped 2D trajectories: the unit of demonstration and prediction."""

from dataclasses import dataclass

import numpy as np

FLOAT_FMT = "%.17g"


@dataclass
class Trajectory:
    """Ordered (t, x, y) samples; t strictly increasing, normalized to [0, 1]."""

    t: np.ndarray
    xy: np.ndarray
    smoothed: bool = True

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.xy = np.asarray(self.xy, dtype=np.float64)
        if self.t.ndim != 1 or self.xy.shape != (self.t.size, 2):
            raise ValueError("trajectory needs t of shape (n,) and xy of shape (n, 2)")
        if self.t.size == 0:
            raise ValueError("empty trajectory")
        if np.any(np.diff(self.t) <= 0.0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        if self.t[0] < 0.0 or self.t[-1] > 1.0:
            raise ValueError("trajectory timestamps must lie in [0, 1]")

    def __len__(self):
        return self.t.size

    def sample(self, t):
        """Linear interpolation of position at normalized time t (clamped)."""
        t = np.clip(np.asarray(t, dtype=np.float64), self.t[0], self.t[-1])
        x = np.interp(t, self.t, self.xy[:, 0])
        y = np.interp(t, self.t, self.xy[:, 1])
        return np.stack([x, y], axis=-1)

    def path_length(self):
        return float(np.sum(np.linalg.norm(np.diff(self.xy, axis=0), axis=1)))


def save_trajectory_csv(path, traj):
    with open(path, "w") as fh:
        fh.write("t,x,y\n")
        for t, (x, y) in zip(traj.t, traj.xy):
            fh.write(f"{t:.17g},{x:.17g},{y:.17g}\n")


def load_trajectory_csv(path, smoothed=True):
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(t=rows[:, 0], xy=rows[:, 1:3], smoothed=smoothed)
