"""A small reverse-mode autodiff engine over float64 numpy arrays.

Every op returns a new :class:`Tensor`.  When any input requires a gradient
the output remembers its parents and a closure mapping the output gradient
to input gradients; :func:`backward` replays those closures in reverse
topological order and accumulates into ``.grad`` of every leaf that
requires one.
"""

from contextlib import contextmanager

import numpy as np

from . import kernels

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording (evaluation and parameter updates)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return not self._parents

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self):
        return sum_all(self)

    def backward(self):
        backward(self)


def raw(x):
    """The numpy array behind a Tensor, or ``x`` as an array."""
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, grad_fn):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = grad_fn
    return out


def _is_scalar_operand(b):
    return not isinstance(b, Tensor) or b.ndim == 0


# -- elementwise ------------------------------------------------------------

def add(a, b):
    a = as_tensor(a)
    if _is_scalar_operand(b) and a.ndim != 0:
        b = as_tensor(b)
        return _make(a.data + b.data, (a, b), lambda g: (g, np.sum(g)))
    b = as_tensor(b)
    _check_same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    a = as_tensor(a)
    if _is_scalar_operand(b) and a.ndim != 0:
        b = as_tensor(b)
        return _make(a.data - b.data, (a, b), lambda g: (g, -np.sum(g)))
    b = as_tensor(b)
    _check_same_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    a = as_tensor(a)
    if _is_scalar_operand(b) and a.ndim != 0:
        b = as_tensor(b)
        return _make(a.data * b.data, (a, b),
                     lambda g: (g * b.data, np.sum(g * a.data)))
    b = as_tensor(b)
    _check_same_shape(a, b, "mul")
    return _make(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a, c):
    """Multiply by a constant (non-differentiable) python scalar."""
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def elementwise(a, b, kind):
    ops = {"add": add, "sub": sub, "mul": mul}
    if kind == "scale":
        if isinstance(b, Tensor):
            raise TypeError("scale takes a python scalar factor")
        return scale(a, b)
    if kind not in ops:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    return ops[kind](a, b)


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


# -- reductions and losses --------------------------------------------------

def sum_all(x):
    x = as_tensor(x)
    return _make(np.sum(x.data), (x,), lambda g: (np.full(x.shape, float(g)),))


def mean_all(x):
    x = as_tensor(x)
    n = x.size
    return _make(np.mean(x.data), (x,), lambda g: (np.full(x.shape, float(g) / n),))


def l1_loss(pred, target):
    """Mean absolute difference over all entries."""
    pred, target = as_tensor(pred), as_tensor(target)
    _check_same_shape(pred, target, "l1_loss")
    diff = pred.data - target.data
    n = diff.size
    sign = np.sign(diff)

    def grad(g):
        gp = sign * (float(g) / n)
        return gp, -gp

    return _make(np.mean(np.abs(diff)), (pred, target), grad)


# -- shape manipulation -----------------------------------------------------

def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes):
    x = as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def index(x, key):
    """Basic or integer-array indexing; gradients scatter-add back."""
    x = as_tensor(x)

    def grad(g):
        out = np.zeros(x.shape)
        np.add.at(out, key, g)
        return (out,)

    return _make(np.array(x.data[key]), (x,), grad)


def take(x, indices, axis):
    x = as_tensor(x)
    indices = np.asarray(indices)

    def grad(g):
        out = np.zeros(x.shape)
        gm = np.moveaxis(g, list(range(axis, axis + indices.ndim)),
                         list(range(indices.ndim)))
        om = np.moveaxis(out, axis, 0)
        np.add.at(om, indices, gm)
        return (out,)

    return _make(np.take(x.data, indices, axis=axis), (x,), grad)


def stack(xs, axis=0):
    xs = [as_tensor(x) for x in xs]

    def grad(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return _make(np.stack([x.data for x in xs], axis=axis), xs, grad)


def concat(xs, axis=0):
    xs = [as_tensor(x) for x in xs]
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return _make(np.concatenate([x.data for x in xs], axis=axis), xs,
                 lambda g: tuple(np.split(g, bounds, axis=axis)))


def roll(x, shift, axis):
    x = as_tensor(x)
    return _make(np.roll(x.data, shift, axis=axis), (x,),
                 lambda g: (np.roll(g, -shift, axis=axis),))


def einsum(subscripts, a, b):
    """Two-operand einsum whose operands' indices all survive or pair up."""
    a, b = as_tensor(a), as_tensor(b)
    ins, out = subscripts.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    for s, other in ((sa, sb), (sb, sa)):
        if any(ch not in out and ch not in other for ch in s):
            raise ValueError(f"einsum {subscripts!r}: index reduced within one operand")

    def grad(g):
        return (np.einsum(f"{out},{sb}->{sa}", g, b.data),
                np.einsum(f"{out},{sa}->{sb}", g, a.data))

    return _make(np.einsum(subscripts, a.data, b.data), (a, b), grad)


def linear_map(x, forward, adjoint):
    """Apply a fixed real-linear map; its adjoint is the gradient rule."""
    x = as_tensor(x)
    return _make(forward(x.data), (x,), lambda g: (adjoint(g),))


# -- convolutions -----------------------------------------------------------

def conv2d_spatial(x, k):
    """Zero-padded "same" 2D cross-correlation.

    ``x`` is ``[C_in, H, W]`` or ``[C_in, N, H, W]`` (frames treated as a
    batch); ``k`` is ``[C_out, C_in, p, p]`` with odd ``p``.
    """
    x, k = as_tensor(x), as_tensor(k)
    if k.ndim != 4 or k.shape[2] != k.shape[3]:
        raise ValueError(f"conv2d: kernel must be [C_out, C_in, p, p], got {k.shape}")
    p = k.shape[2]
    if p % 2 == 0:
        raise ValueError(f"conv2d: kernel size must be odd, got {p}")
    if x.ndim not in (3, 4):
        raise ValueError(f"conv2d: input must be [C_in, (N,) H, W], got {x.shape}")
    if x.shape[0] != k.shape[1]:
        raise ValueError(f"conv2d: input has {x.shape[0]} channels, kernel expects {k.shape[1]}")
    squeeze = x.ndim == 3
    xd = x.data[:, None] if squeeze else x.data
    out = kernels.conv2d_forward(xd, k.data)

    def grad(g):
        g4 = g[:, None] if squeeze else g
        gx = kernels.conv2d_grad_input(g4, k.data) if x.requires_grad else None
        gk = kernels.conv2d_grad_kernel(g4, xd, p) if k.requires_grad else None
        if squeeze and gx is not None:
            gx = gx[:, 0]
        return gx, gk

    return _make(out[:, 0] if squeeze else out, (x, k), grad)


def conv1d_temporal(x, k):
    """Circular 1D cross-correlation along axis 1 of ``x[C_in, T, ...]``."""
    x, k = as_tensor(x), as_tensor(k)
    if k.ndim != 3:
        raise ValueError(f"conv1d: kernel must be [C_out, C_in, q], got {k.shape}")
    q = k.shape[2]
    if q % 2 == 0:
        raise ValueError(f"conv1d: kernel length must be odd, got {q}")
    if x.ndim < 2 or x.shape[0] != k.shape[1]:
        raise ValueError(f"conv1d: channel mismatch {x.shape} vs kernel {k.shape}")
    if q > x.shape[1]:
        raise ValueError(f"conv1d: kernel length {q} exceeds {x.shape[1]} frames")
    out = kernels.conv1d_forward(x.data, k.data)

    def grad(g):
        gx = kernels.conv1d_grad_input(g, k.data) if x.requires_grad else None
        gk = kernels.conv1d_grad_kernel(g, x.data, q) if k.requires_grad else None
        return gx, gk

    return _make(out, (x, k), grad)


# -- backward pass ----------------------------------------------------------

def _tape(root):
    """Nodes reachable from ``root`` in topological order (inputs first)."""
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requiring leaf."""
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise ValueError("backward needs a scalar loss tensor")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor requiring grad")
    grads = {id(loss): np.ones(loss.shape)}
    for node in reversed(_tape(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg
