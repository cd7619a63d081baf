"""Dense float64 tensors with reverse-mode automatic differentiation.

Small by design: just enough ops for MLPs, a strided conv stack and the
Gaussian NLL training loss. Every op is pure and deterministic, so repeated
forward passes on the same inputs are bit-identical.
"""

import numpy as np


def softplus(x):
    """Overflow-safe ln(1 + e^x); works on scalars and ndarrays, always > 0."""
    return np.logaddexp(0.0, x)


def sigmoid(x):
    # derivative of softplus; tanh form avoids exp overflow on both tails
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def gaussian_nll(x, mu, sigma):
    """Negative log-likelihood of x under N(mu, sigma^2). sigma must be > 0."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0.0):
        raise ValueError("gaussian_nll requires sigma > 0")
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    out = 0.5 * np.log(2.0 * np.pi * sigma ** 2) + (x - mu) ** 2 / (2.0 * sigma ** 2)
    return float(out) if out.ndim == 0 else out


def _unbroadcast(grad, shape):
    """Sum grad over the axes numpy broadcast to reach `grad.shape` from `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A numpy float64 array plus the tape hooks for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _make(data, parents, backward):
        out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def __add__(self, other):
        other = as_tensor(other)
        out_data = self.data + other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        return Tensor._make(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            if self.requires_grad:
                self._accumulate(-g)

        return Tensor._make(-self.data, (self,), backward)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out_data = self.data * other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return Tensor._make(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out_data = self.data / other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / other.data ** 2, other.data.shape)
                )

        return Tensor._make(out_data, (self, other), backward)

    def matmul(self, other):
        out_data = self.data @ other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ g)

        return Tensor._make(out_data, (self, other), backward)

    __matmul__ = matmul

    def relu(self):
        mask = self.data > 0.0

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * mask)

        return Tensor._make(self.data * mask, (self,), backward)

    def softplus(self):
        def backward(g):
            if self.requires_grad:
                self._accumulate(g * sigmoid(self.data))

        return Tensor._make(softplus(self.data), (self,), backward)

    def log(self):
        def backward(g):
            if self.requires_grad:
                self._accumulate(g / self.data)

        return Tensor._make(np.log(self.data), (self,), backward)

    def square(self):
        def backward(g):
            if self.requires_grad:
                self._accumulate(g * 2.0 * self.data)

        return Tensor._make(self.data ** 2, (self,), backward)

    def sum(self, axis=None):
        out_data = self.data.sum(axis=axis)

        def backward(g):
            if self.requires_grad:
                if axis is None:
                    self._accumulate(np.full_like(self.data, g))
                else:
                    self._accumulate(np.broadcast_to(np.expand_dims(g, axis), self.data.shape).copy())

        return Tensor._make(out_data, (self,), backward)

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old_shape = self.data.shape

        def backward(g):
            if self.requires_grad:
                self._accumulate(g.reshape(old_shape))

        return Tensor._make(self.data.reshape(shape), (self,), backward)

    def cols(self, lo, hi):
        """Column slice [:, lo:hi] of a 2D tensor."""
        shape = self.data.shape

        def backward(g):
            if self.requires_grad:
                full = np.zeros(shape)
                full[:, lo:hi] = g
                self._accumulate(full)

        return Tensor._make(self.data[:, lo:hi], (self,), backward)

    def take_flat(self, idx):
        """Gather from the flattened tensor; backward scatter-adds."""
        idx = np.asarray(idx)
        flat_size = self.data.size
        shape = self.data.shape

        def backward(g):
            if self.requires_grad:
                scattered = np.bincount(
                    idx.ravel(), weights=g.ravel(), minlength=flat_size
                )
                self._accumulate(scattered.reshape(shape))

        return Tensor._make(self.data.reshape(-1)[idx], (self,), backward)

    def pad2d(self, pad):
        """Zero-pad the two leading spatial axes of an (H, W, C) tensor."""
        out_data = np.pad(self.data, ((pad, pad), (pad, pad), (0, 0)))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g[pad:-pad, pad:-pad, :] if pad else g)

        return Tensor._make(out_data, (self,), backward)

    # -- reverse pass --------------------------------------------------------

    def backward(self):
        """Run reverse-mode accumulation from this scalar tensor."""
        if self.data.ndim != 0 and self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors, axis=0):
    """Differentiable concatenation along an axis."""
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    extents = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + extents)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(g[tuple(index)])

    return Tensor._make(out_data, tuple(tensors), backward)
