"""Conditional Neural Process: per-tuple encoder, mean aggregation, Gaussian
query head, the NLL training loss, and the training loop.

Context tuples are (t, gamma, sm) where gamma is an optional conditioning
vector: a CNN state encoding, a flattened planning condition, or absent for
the plain trajectory model. Aggregation is the mean of the encoded tuples in
the order given, so results are bit-reproducible for a fixed ordering and
permutations agree to float re-association (~1e-15).
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, gaussian_nll
from .nets import (
    ParamSet,
    adam_step,
    collect_gradients,
    init_adam_state,
    init_dense,
    load_checkpoint,
    mlp_forward,
    save_checkpoint,
)

DEFAULT_HIDDEN = 128
DEFAULT_DEPTH = 3


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class ContextPoint:
    """One observed tuple: normalized time, optional conditioning, SM value."""

    t: float
    sm: np.ndarray
    gamma: np.ndarray = None

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"context time {self.t} outside [0, 1]")
        self.sm = np.asarray(self.sm, dtype=np.float64)
        if self.gamma is not None:
            self.gamma = np.asarray(self.gamma, dtype=np.float64)


@dataclass
class QueryBatch:
    t_q: np.ndarray

    def __post_init__(self):
        self.t_q = np.atleast_1d(np.asarray(self.t_q, dtype=np.float64))
        if np.any(self.t_q < 0.0) or np.any(self.t_q > 1.0):
            raise ValueError("query times must lie in [0, 1]")


@dataclass
class GaussianPrediction:
    """Per-query means and (strictly positive) standard deviations."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.mu.shape != self.sigma.shape:
            raise ValueError("mu and sigma shapes differ")
        if np.any(self.sigma <= 0.0):
            raise ValueError("sigma must be strictly positive")


class CnpModel:
    """Encoder + query networks with their dimensions. Params are shared in
    one ParamSet so extra networks (e.g. a CNN) can be trained jointly."""

    def __init__(self, params, d_r, d_gamma, sm_dim, n_max):
        self.params = params
        self.d_r = d_r
        self.d_gamma = d_gamma
        self.sm_dim = sm_dim
        self.n_max = n_max

    @classmethod
    def create(cls, d_gamma=0, sm_dim=2, d_r=DEFAULT_HIDDEN, n_max=10, seed=0,
               hidden=DEFAULT_HIDDEN, depth=DEFAULT_DEPTH, params=None, rng=None):
        if rng is None:
            rng = np.random.default_rng(seed)
        if params is None:
            params = ParamSet()
        enc_sizes = [1 + d_gamma + sm_dim] + [hidden] * depth + [d_r]
        qry_sizes = [d_r + 1] + [hidden] * depth + [2 * sm_dim]
        init_dense(params, "enc.", enc_sizes, rng)
        init_dense(params, "qry.", qry_sizes, rng)
        return cls(params, d_r, d_gamma, sm_dim, n_max)

    def meta(self):
        return {"d_r": self.d_r, "d_gamma": self.d_gamma,
                "sm_dim": self.sm_dim, "n_max": self.n_max}

    def save(self, path, extra_meta=None):
        meta = {"kind": "cnp", **self.meta()}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path):
        params, meta = load_checkpoint(path)
        model = cls(params, int(meta["d_r"]), int(meta["d_gamma"]),
                    int(meta["sm_dim"]), int(meta["n_max"]))
        return model, meta


def _context_matrix(model, contexts, gamma):
    n = len(contexts)
    t_col = Tensor(np.array([[c.t] for c in contexts]))
    sm = Tensor(np.stack([c.sm for c in contexts]))
    parts = [t_col]
    if model.d_gamma > 0:
        if gamma is not None:
            g = gamma if isinstance(gamma, Tensor) else Tensor(np.asarray(gamma, dtype=np.float64))
            if g.data.size != model.d_gamma:
                raise ValueError(f"gamma length {g.data.size} != d_gamma {model.d_gamma}")
            parts.append(Tensor(np.zeros((n, model.d_gamma))) + g.reshape(1, model.d_gamma))
        else:
            present = [c.gamma is not None for c in contexts]
            if not all(present):
                raise ValueError("model expects gamma on every context point")
            parts.append(Tensor(np.stack([c.gamma for c in contexts])))
    parts.append(sm)
    return concat(parts, axis=1)


def encode_context(model, contexts, gamma=None):
    """Mean of the encoded context tuples; returns a length-d_r Tensor."""
    if not contexts:
        raise ValueError("context set must be nonempty")
    ctx = _context_matrix(model, contexts, gamma)
    encoded = mlp_forward(model.params, ctx, prefix="enc.")
    return encoded.mean(axis=0)


def query_tensors(model, r, queries):
    """Graph-connected (mu, sigma) Tensors for the given query times."""
    t_q = queries.t_q if isinstance(queries, QueryBatch) else QueryBatch(queries).t_q
    n_q = t_q.size
    r_tile = Tensor(np.zeros((n_q, model.d_r))) + r.reshape(1, model.d_r)
    q_in = concat([r_tile, Tensor(t_q[:, None])], axis=1)
    out = mlp_forward(model.params, q_in, prefix="qry.")
    mu = out.cols(0, model.sm_dim)
    sigma = out.cols(model.sm_dim, 2 * model.sm_dim).softplus()
    return mu, sigma


def query(model, r, queries):
    """Gaussian prediction at the query times given a context representation."""
    mu, sigma = query_tensors(model, r, queries)
    return GaussianPrediction(mu=mu.data.copy(), sigma=sigma.data.copy())


def predict(model, contexts, queries, gamma=None):
    """encode_context + query in one call."""
    r = encode_context(model, contexts, gamma=gamma)
    return query(model, r, queries)


def nll_loss(pred, targets):
    """Mean over queries of the summed per-dimension Gaussian NLL."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != pred.mu.shape:
        raise ValueError(f"target shape {targets.shape} != prediction {pred.mu.shape}")
    per_point = gaussian_nll(targets, pred.mu, pred.sigma)
    return float(np.mean(np.sum(np.atleast_2d(per_point), axis=1)))


def nll_loss_tensor(mu, sigma, targets):
    """Same loss on graph tensors, for training."""
    targets = Tensor(np.asarray(targets, dtype=np.float64))
    var2 = sigma.square() * 2.0
    per_point = (var2 * np.pi).log() * 0.5 + (targets - mu).square() / var2
    return per_point.sum(axis=1).mean()


def sample_context(traj, n_max, rng):
    """Draw a training instance: n ~ U{1..n_max} context points (without
    replacement) and every trajectory point as a query target."""
    n_points = len(traj)
    if n_points < 1:
        raise ValueError("empty trajectory")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    n = int(rng.integers(1, n_max + 1))
    n = min(n, n_points)
    idx = np.sort(rng.choice(n_points, size=n, replace=False))
    contexts = [ContextPoint(t=float(traj.t[i]), sm=traj.xy[i]) for i in idx]
    return contexts, QueryBatch(traj.t.copy()), traj.xy.copy()


def episode_loss(model, traj, gamma, rng, sampler=None):
    """Sampled-context NLL of one trajectory; used by train() and evaluators."""
    draw = sampler if sampler is not None else sample_context
    contexts, queries, targets = draw(traj, model.n_max, rng)
    if gamma is not None and not isinstance(gamma, Tensor):
        gamma = Tensor(np.asarray(gamma, dtype=np.float64))
    r = encode_context(model, contexts, gamma=gamma)
    mu, sigma = query_tensors(model, r, queries)
    return nll_loss_tensor(mu, sigma, targets)


def train(model, dataset, epochs, lr, seed=0, gamma_fn=None, progress=None,
          sampler=None):
    """Train on a list of episodes, one trajectory per optimization step.

    dataset: list of Trajectory, or of (Trajectory, gamma-vector) pairs.
    gamma_fn: optional callable(episode) -> Tensor, for conditioning vectors
              that must be recomputed inside the graph every step (CNN).
    sampler: optional callable(traj, n_max, rng) -> (contexts, queries,
             targets) replacing the default uniform context draw, so callers
             can match training contexts to how the model is queried later.
    Returns (model, history) with one mean-NLL entry per epoch. Deterministic
    for a fixed seed; raises TrainingDiverged on a non-finite loss.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(seed)
    state = init_adam_state(model.params)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        total = 0.0
        for step_no, i in enumerate(order):
            episode = dataset[i]
            if gamma_fn is not None:
                traj = episode[0] if isinstance(episode, tuple) else episode
                gamma = gamma_fn(episode)
            elif isinstance(episode, tuple):
                traj, gamma = episode
            else:
                traj, gamma = episode, None
            model.params.zero_grad()
            loss = episode_loss(model, traj, gamma, rng, sampler=sampler)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss {value} at epoch {epoch}, step {step_no}")
            loss.backward()
            adam_step(model.params, collect_gradients(model.params), state, lr)
            total += value
        history.append(total / len(dataset))
        if progress is not None:
            progress(epoch, history[-1])
    return model, history
