"""Parameter containers, MLP/conv forward passes, Adam, and checkpoint IO.

Weights live in a ParamSet keyed by layer name; layer stacks are discovered
by probing indexed names ("enc.w0", "enc.w1", ...) so one ParamSet can hold
several jointly trained networks.
"""

import math

import numpy as np

from .autodiff import Tensor


class ParamSet:
    """Named, ordered collection of trainable tensors."""

    def __init__(self):
        self._params = {}

    def add(self, name, data):
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        self._params[name] = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        return self._params[name]

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def copy(self):
        out = ParamSet()
        for name, t in self._params.items():
            out.add(name, t.data.copy())
        return out


def collect_gradients(params):
    """Gradients per parameter after a backward pass; zeros where unconnected."""
    return {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }


def init_dense(params, prefix, sizes, rng):
    """Add a dense stack w0/b0..wN/bN; weights ~ U(+-sqrt(6/fan_in)), zero bias.

    The bound keeps unit signal gain through ReLU layers. Smaller scales
    stack up: each layer then attenuates ~0.4x, deep heads squash input
    sensitivity by orders of magnitude, and conditioning inputs start so
    muted that training settles on ignoring them.
    """
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = math.sqrt(6.0 / fan_in)
        params.add(f"{prefix}w{i}", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.add(f"{prefix}b{i}", np.zeros(fan_out))


def mlp_forward(params, x, prefix=""):
    """Affine + ReLU stack with a linear output layer. x is (n, d_in)."""
    if x.data.ndim != 2 or f"{prefix}w0" not in params:
        raise ValueError("mlp_forward wants a (n, d) input and at least one layer")
    if x.data.shape[1] != params[f"{prefix}w0"].data.shape[0]:
        raise ValueError(
            f"input width {x.data.shape[1]} does not match first layer "
            f"{params[f'{prefix}w0'].data.shape[0]}"
        )
    i = 0
    while f"{prefix}w{i}" in params:
        x = x @ params[f"{prefix}w{i}"] + params[f"{prefix}b{i}"]
        i += 1
        if f"{prefix}w{i}" in params:
            x = x.relu()
    return x


_IM2COL_CACHE = {}


def _im2col_indices(h, w, c, k, stride, pad):
    key = (h, w, c, k, stride, pad)
    cached = _IM2COL_CACHE.get(key)
    if cached is not None:
        return cached
    hp, wp = h + 2 * pad, w + 2 * pad
    out_h = (hp - k) // stride + 1
    out_w = (wp - k) // stride + 1
    rows = (np.arange(out_h) * stride)[:, None, None, None, None] + np.arange(k)[None, None, :, None, None]
    cols = (np.arange(out_w) * stride)[None, :, None, None, None] + np.arange(k)[None, None, None, :, None]
    chan = np.arange(c)[None, None, None, None, :]
    flat = (rows * wp + cols) * c + chan
    result = (flat.reshape(out_h * out_w, k * k * c), out_h, out_w)
    _IM2COL_CACHE[key] = result
    return result


def conv2d(image, kernel, stride=1, padding="same"):
    """Cross-correlate an (H, W, C) image with a (K, K, C, F) kernel stack."""
    h, w, c = image.data.shape
    k, k2, c_in, f = kernel.data.shape
    if k != k2 or k % 2 == 0:
        raise ValueError("kernel must be square with odd extent")
    if c_in != c:
        raise ValueError(f"kernel expects {c_in} channels, image has {c}")
    pad = (k - 1) // 2 if padding == "same" else 0
    idx, out_h, out_w = _im2col_indices(h, w, c, k, stride, pad)
    patches = image.pad2d(pad).take_flat(idx)
    out = patches @ kernel.reshape(k * k * c, f)
    return out.reshape(out_h, out_w, f)


def init_cnn(params, prefix, in_shape, filters, dense_out, rng, kernel=3, stride=2):
    """Conv stack (ReLU, same padding) plus a dense head to `dense_out` units."""
    h, w, c = in_shape
    for i, f in enumerate(filters):
        fan_in = kernel * kernel * c
        bound = math.sqrt(6.0 / fan_in)
        params.add(f"{prefix}conv{i}.k", rng.uniform(-bound, bound, size=(kernel, kernel, c, f)))
        params.add(f"{prefix}conv{i}.b", np.zeros(f))
        pad = (kernel - 1) // 2
        h = (h + 2 * pad - kernel) // stride + 1
        w = (w + 2 * pad - kernel) // stride + 1
        c = f
    init_dense(params, f"{prefix}head.", [h * w * c, dense_out], rng)
    return h * w * c


def cnn_forward(params, image, prefix="cnn.", stride=2):
    """Run the conv stack and dense head; returns a flat (dense_out,) tensor."""
    x = image
    i = 0
    while f"{prefix}conv{i}.k" in params:
        x = conv2d(x, params[f"{prefix}conv{i}.k"], stride=stride, padding="same")
        x = (x + params[f"{prefix}conv{i}.b"]).relu()
        i += 1
    flat = x.reshape(1, x.data.size)
    out = mlp_forward(params, flat, prefix=f"{prefix}head.")
    return out.reshape(out.data.size)


def init_adam_state(params):
    return {
        "t": 0,
        "m": {name: np.zeros_like(t.data) for name, t in params.items()},
        "v": {name: np.zeros_like(t.data) for name, t in params.items()},
    }


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update with bias correction, in place; returns (params, state)."""
    state["t"] += 1
    t = state["t"]
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state["m"][name]
        v = state["v"][name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g ** 2
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


CHECKPOINT_MAGIC = "CNPV1"


def save_checkpoint(path, params, meta=None):
    """Text checkpoint: magic line, optional metadata line, one line per parameter.

    Values use 17 significant digits so a load/save cycle is bit-exact.
    """
    lines = [CHECKPOINT_MAGIC]
    if meta:
        lines.append("meta " + " ".join(f"{k}={v}" for k, v in meta.items()))
    for name, t in params.items():
        a = t.data
        fields = [name, str(a.ndim)]
        fields.extend(str(e) for e in a.shape)
        fields.extend(f"{v:.17g}" for v in a.reshape(-1))
        lines.append(" ".join(fields))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (ParamSet, meta dict of strings)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a {CHECKPOINT_MAGIC} checkpoint: {path}")
    meta = {}
    body = lines[1:]
    if body and body[0].startswith("meta "):
        for pair in body[0][5:].split():
            key, _, value = pair.partition("=")
            meta[key] = value
        body = body[1:]
    params = ParamSet()
    for line in body:
        if not line.strip():
            continue
        fields = line.split()
        name = fields[0]
        ndim = int(fields[1])
        shape = tuple(int(e) for e in fields[2 : 2 + ndim])
        values = np.array([float(v) for v in fields[2 + ndim :]], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise ValueError(f"parameter {name}: expected {np.prod(shape)} values")
        params.add(name, values.reshape(shape))
    return params, meta
