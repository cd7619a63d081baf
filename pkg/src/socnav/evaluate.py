"""Shared evaluation protocol for trained models.

Static models are scored by conditioning on the task endpoints (position
at t=0 and t=1) and querying the full time grid of each episode, mirroring
how a deployed planner knows only start and goal. Social models condition
on the (position, goal, forecast) vector with the start position as the
single context tuple.
"""

from dataclasses import dataclass

import numpy as np

from . import cnp
from .planner import forecast_margins_ok, plan_trajectory
from .world import inflate


def endpoint_contexts(traj):
    """Context tuples at the first and last samples of a trajectory."""
    return [cnp.ContextPoint(t=float(traj.t[0]), sm=traj.xy[0]),
            cnp.ContextPoint(t=float(traj.t[-1]), sm=traj.xy[-1])]


@dataclass
class StaticEvalResult:
    episodes: int
    nll: float
    mse: float
    clearance_rate: float

    def as_dict(self):
        return {
            "episodes": str(self.episodes),
            "nll": f"{self.nll:.17g}",
            "mse": f"{self.mse:.17g}",
            "clearance_rate": f"{self.clearance_rate:.17g}",
        }


def predict_episode(model, grid, traj):
    """Full-trajectory prediction from endpoint contexts.

    `model` is either a plain trajectory CNP (grids ignored) or an
    image-conditioned model exposing encode_tensor.
    """
    contexts = endpoint_contexts(traj)
    queries = cnp.QueryBatch(traj.t)
    if hasattr(model, "encode_tensor"):
        core = model.model
        if core.d_gamma > 0:
            gamma = model.encode_tensor(grid).data
            return cnp.predict(core, contexts, queries, gamma=gamma)
        return cnp.predict(core, contexts, queries)
    return cnp.predict(model, contexts, queries)


def _prediction_clear(mu, grid_inflated):
    for p in mu:
        r, c = grid_inflated.cell_of_norm(p)
        if grid_inflated.cells[r, c]:
            return False
    return True


def evaluate_static(model, episodes):
    """Mean NLL/MSE over episodes plus the fraction whose predicted mean
    path stays at least one inflated cell clear of the obstacles.

    episodes: list of (grid, trajectory).
    """
    if not episodes:
        raise ValueError("no episodes to evaluate")
    nll_total = 0.0
    mse_total = 0.0
    clear = 0
    for grid, traj in episodes:
        pred = predict_episode(model, grid, traj)
        nll_total += cnp.nll_loss(pred, traj.xy)
        mse_total += float(np.mean((pred.mu - traj.xy) ** 2))
        if _prediction_clear(pred.mu, inflate(grid, 1)):
            clear += 1
    n = len(episodes)
    return StaticEvalResult(episodes=n, nll=nll_total / n, mse=mse_total / n,
                            clearance_rate=clear / n)


@dataclass
class SocialEvalResult:
    episodes: int
    nll: float
    mse: float
    margin_rate: float

    def as_dict(self):
        return {
            "episodes": str(self.episodes),
            "nll": f"{self.nll:.17g}",
            "mse": f"{self.mse:.17g}",
            "margin_rate": f"{self.margin_rate:.17g}",
        }


def evaluate_social(spm, episodes):
    """NLL/MSE against the expert demos plus the fraction of predicted
    plans keeping the safety margin to every forecast disc.

    episodes: SocialEpisode records (condition, trajectory, forecast,
    duration).
    """
    if not episodes:
        raise ValueError("no episodes to evaluate")
    nll_total = 0.0
    mse_total = 0.0
    margins = 0
    for ep in episodes:
        contexts = [cnp.ContextPoint(t=float(ep.trajectory.t[0]),
                                     sm=ep.trajectory.xy[0])]
        pred = cnp.predict(spm.model, contexts, cnp.QueryBatch(ep.trajectory.t),
                           gamma=ep.condition.vector())
        nll_total += cnp.nll_loss(pred, ep.trajectory.xy)
        mse_total += float(np.mean((pred.mu - ep.trajectory.xy) ** 2))
        # plan time is normalized by t_ref, so that is its duration here
        plan, _ = plan_trajectory(spm, ep.condition)
        if forecast_margins_ok(plan, spm.t_ref, ep.forecast, spm.d_safe,
                               spm.world_size):
            margins += 1
    n = len(episodes)
    return SocialEvalResult(episodes=n, nll=nll_total / n, mse=mse_total / n,
                            margin_rate=margins / n)


def save_report(path, result, extra=None):
    with open(path, "w") as fh:
        if extra:
            for key, val in extra.items():
                fh.write(f"{key}={val}\n")
        for key, val in result.as_dict().items():
            fh.write(f"{key}={val}\n")
