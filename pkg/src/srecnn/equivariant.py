"""Rotation-equivariant (2+1)D layers over the cyclic group of order s.

Group feature maps are tensors ``[s, C, T, H, W]``; slot ``A`` holds the
response to filters rotated by ``2*pi*A/s``.  The group acts on them by
rotating every frame and cycling the orientation axis forward.

Weights of the group layers are indexed by the *relative* element
``A - B (mod s)``; this is the cyclic channel shift of the filters written
as an index rule.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .filters import (
    FilterBank,
    FourierBasis1D,
    FourierBasis2D,
    quarter_turns,
    synthesize_filter_1d,
    synthesize_filter_2d,
)


@dataclass(frozen=True)
class RotationGroup:
    order: int

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("group order must be >= 1")

    @property
    def elements(self):
        return range(self.order)

    def angle(self, g):
        return 2.0 * np.pi * (g % self.order) / self.order

    def compose(self, a, b):
        return (a + b) % self.order

    def inverse(self, a):
        return (-a) % self.order

    @property
    def identity(self):
        return 0

    @property
    def grid_exact(self):
        """True when every element is a multiple of 90 degrees."""
        return 4 % self.order == 0

    def relative_index(self):
        """``idx[B, A] = B^-1 A``."""
        e = np.arange(self.order)
        return (e[None, :] - e[:, None]) % self.order

    def default_basis(self, p):
        return FourierBasis2D(p) if self.grid_exact else FourierBasis2D.smooth(p)


# -- group action -----------------------------------------------------------

def _bilinear_rotate(x, angle):
    h, w = x.shape[-2:]
    c0, c1 = (h - 1) / 2.0, (w - 1) / 2.0
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    x1, x2 = j - c1, c0 - i
    ca, sa = np.cos(angle), np.sin(angle)
    # source = R(-angle) applied to the output coordinate
    s1 = ca * x1 + sa * x2
    s2 = -sa * x1 + ca * x2
    si, sj = c0 - s2, c1 + s1
    i0, j0 = np.floor(si).astype(int), np.floor(sj).astype(int)
    fi, fj = si - i0, sj - j0
    out = np.zeros(x.shape)
    for di, wi in ((0, 1.0 - fi), (1, fi)):
        for dj, wj in ((0, 1.0 - fj), (1, fj)):
            ii, jj = i0 + di, j0 + dj
            ok = (ii >= 0) & (ii < h) & (jj >= 0) & (jj < w)
            vals = x[..., np.clip(ii, 0, h - 1), np.clip(jj, 0, w - 1)]
            out += vals * (wi * wj * ok)
    return out


def rotate_angle(x, angle):
    """Rotate the trailing two axes counter-clockwise about the array centre.

    Multiples of 90 degrees are exact index permutations; other angles use
    bilinear resampling with zeros outside the frame.
    """
    x = np.asarray(T.raw(x), dtype=np.float64)
    if x.shape[-1] != x.shape[-2]:
        raise ValueError(f"rotation needs square frames, got {x.shape[-2:]}")
    n = quarter_turns(angle)
    if n is not None:
        return np.rot90(x, n, axes=(-2, -1)).copy()
    return _bilinear_rotate(x, angle)


def rotate_image(x, g, group):
    return rotate_angle(x, group.angle(g))


def act(x, g, group, kind):
    """Group action on an ``"image"`` (``[..., H, W]``) or ``"group"`` map."""
    x = np.asarray(_raw(x), dtype=np.float64)
    if kind == "group":
        if x.shape[0] != group.order:
            raise ValueError(f"orientation axis {x.shape[0]} != group order {group.order}")
        x = np.roll(x, g, axis=0)
    elif kind != "image":
        raise ValueError(f"unknown feature kind {kind!r}")
    return rotate_image(x, g, group)


class GroupFeatureMap:
    """A ``[s, C, T, H, W]`` tensor tagged with its group."""

    __slots__ = ("tensor", "group")

    def __init__(self, tensor, group):
        tensor = T.as_tensor(tensor)
        if tensor.ndim != 5 or tensor.shape[0] != group.order:
            raise ValueError(f"expected [s={group.order}, C, T, H, W], got {tensor.shape}")
        self.tensor = tensor
        self.group = group

    @property
    def shape(self):
        return self.tensor.shape

    def flat(self):
        s, c, *rest = self.shape
        return self.tensor.reshape((s * c, *rest))


def _unflat(x, s):
    sc, *rest = x.shape
    return x.reshape((s, sc // s, *rest))


# -- functional layers ------------------------------------------------------

def lifting_conv(image, bank, group):
    """``[C_in, T, H, W]`` -> group map; slot A uses the bank rotated by A."""
    image = T.as_tensor(image)
    s = group.order
    k = T.stack([synthesize_filter_2d(bank, group.angle(a)) for a in group.elements])
    co, ci, p = k.shape[1], k.shape[2], k.shape[3]
    out = T.conv2d_spatial(image, k.reshape((s * co, ci, p, p)))
    return GroupFeatureMap(_unflat(out, s), group)


def temporal_group_conv(fmap, bank, group):
    """Orientation-coupled circular temporal convolution.

    ``bank.coeffs`` is ``[C_out, C_in, s, n_basis]`` over a 1D basis; output
    slot T sums input slot A through base kernel ``T^-1 A``.  No spatial
    rotation is involved.
    """
    s = group.order
    base = synthesize_filter_1d(bank)                      # [Co, Ci, s, q]
    co, ci, _, q = base.shape
    full = T.take(base, group.relative_index(), axis=2)    # [Co, Ci, T, A, q]
    full = full.transpose(2, 0, 3, 1, 4).reshape((s * co, s * ci, q))
    out = T.conv1d_temporal(fmap.flat(), full)
    return GroupFeatureMap(_unflat(out, s), group)


def group_conv2d(fmap, bank, group):
    """Spatial group convolution; ``bank.coeffs`` is ``[C_out, C_in, s, n]``.

    Output slot B sums input slot A through base filter ``B^-1 A`` rotated
    by B.
    """
    s = group.order
    rel = group.relative_index()
    blocks = []
    for b in group.elements:
        w = synthesize_filter_2d(bank, group.angle(b))     # [Co, Ci, s, p, p]
        blocks.append(T.take(w, rel[b], axis=2))           # indexed by A
    k = T.stack(blocks)                                    # [B, Co, Ci, A, p, p]
    _, co, ci, _, p, _ = k.shape
    k = k.transpose(0, 1, 3, 2, 4, 5).reshape((s * co, s * ci, p, p))
    out = T.conv2d_spatial(fmap.flat(), k)
    return GroupFeatureMap(_unflat(out, s), group)


def group_projection(fmap, bank, group):
    """Group map -> ``[C_out, T, H, W]``; slot A meets the bank rotated by A."""
    s = group.order
    k = T.stack([synthesize_filter_2d(bank, group.angle(a)) for a in group.elements], axis=1)
    co, _, ci, p, _ = k.shape
    return T.conv2d_spatial(fmap.flat(), k.reshape((co, s * ci, p, p)))


# -- layer objects ----------------------------------------------------------

class Layer:
    in_kind = out_kind = "image"

    def parameters(self):
        return []

    def named_parameters(self):
        return []


class ReLU(Layer):
    def __init__(self, kind="image"):
        self.in_kind = self.out_kind = kind

    def __call__(self, x):
        if isinstance(x, GroupFeatureMap):
            return GroupFeatureMap(T.relu(x.tensor), x.group)
        return T.relu(x)


class _BankLayer(Layer):
    def parameters(self):
        return [self.bank.coeffs]

    def named_parameters(self):
        return [("coeffs", self.bank.coeffs)]


class LiftingConv(_BankLayer):
    in_kind, out_kind = "image", "group"

    def __init__(self, c_in, c_out, group, p, rng, basis=None):
        self.group = group
        basis = basis or group.default_basis(p)
        self.bank = FilterBank.initialize(basis, (c_out, c_in), rng)

    def __call__(self, x):
        return lifting_conv(x, self.bank, self.group)


class TemporalGroupConv(_BankLayer):
    in_kind = out_kind = "group"

    def __init__(self, c_in, c_out, group, q, rng, basis=None):
        self.group = group
        basis = basis or FourierBasis1D(q)
        s = group.order
        self.bank = FilterBank.initialize(basis, (c_out, c_in, s), rng, fan_in=c_in * s)

    def __call__(self, f):
        return temporal_group_conv(f, self.bank, self.group)


class GroupConv2d(_BankLayer):
    in_kind = out_kind = "group"

    def __init__(self, c_in, c_out, group, p, rng, basis=None):
        self.group = group
        basis = basis or group.default_basis(p)
        s = group.order
        self.bank = FilterBank.initialize(basis, (c_out, c_in, s), rng, fan_in=c_in * s)

    def __call__(self, f):
        return group_conv2d(f, self.bank, self.group)


class GroupProjection(_BankLayer):
    in_kind, out_kind = "group", "image"

    def __init__(self, c_in, c_out, group, p, rng, basis=None, zero=False):
        self.group = group
        basis = basis or group.default_basis(p)
        if zero:
            self.bank = FilterBank.zeros(basis, (c_out, c_in))
        else:
            self.bank = FilterBank.initialize(basis, (c_out, c_in), rng,
                                              fan_in=c_in * group.order)

    def __call__(self, f):
        return group_projection(f, self.bank, self.group)


class PlainConv2d(Layer):
    """Ordinary 2D convolution with free ``p x p`` weights."""

    def __init__(self, c_in, c_out, p, rng, zero=False):
        if zero:
            w = np.zeros((c_out, c_in, p, p))
        else:
            w = rng.uniform(-1, 1, (c_out, c_in, p, p)) * np.sqrt(6.0 / (c_in * p * p))
        self.weight = T.Tensor(w, requires_grad=True)

    def __call__(self, x):
        return T.conv2d_spatial(x, self.weight)

    def parameters(self):
        return [self.weight]

    def named_parameters(self):
        return [("weight", self.weight)]


class PlainConv1d(Layer):
    """Ordinary circular temporal convolution with free weights."""

    def __init__(self, c_in, c_out, q, rng):
        w = rng.uniform(-1, 1, (c_out, c_in, q)) * np.sqrt(6.0 / (c_in * q))
        self.weight = T.Tensor(w, requires_grad=True)

    def __call__(self, x):
        return T.conv1d_temporal(x, self.weight)

    def parameters(self):
        return [self.weight]

    def named_parameters(self):
        return [("weight", self.weight)]


class UntiedTemporalConv(Layer):
    """Temporal conv over all ``s*C`` orientation channels with untied weights.

    Used as the ablation that breaks equivariance between spatial group
    layers.
    """

    in_kind = out_kind = "group"

    def __init__(self, c_in, c_out, group, q, rng):
        self.group = group
        self.inner = PlainConv1d(group.order * c_in, group.order * c_out, q, rng)

    def __call__(self, f):
        return GroupFeatureMap(_unflat(self.inner(f.flat()), self.group.order), self.group)

    def parameters(self):
        return self.inner.parameters()

    def named_parameters(self):
        return self.inner.named_parameters()


class Sequential(Layer):
    def __init__(self, *layers):
        self.layers = list(layers)
        self.in_kind = self.layers[0].in_kind
        self.out_kind = self.layers[-1].out_kind

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def named_parameters(self):
        return [(f"{i}.{n}", p) for i, layer in enumerate(self.layers)
                for n, p in layer.named_parameters()]


# -- equivariance measurement -----------------------------------------------

def _raw(y):
    if isinstance(y, GroupFeatureMap):
        y = y.tensor
    return np.asarray(T.raw(y))


def central_disk(h, margin):
    c = (h - 1) / 2.0
    i, j = np.meshgrid(np.arange(h), np.arange(h), indexing="ij")
    return np.hypot(i - c, j - c) <= h / 2.0 - margin


def equivariance_error(f, x, g, group, in_kind=None, out_kind=None, margin=None):
    """``||f(g.x) - g.f(x)|| / ||f(x)||``.

    At off-grid angles the comparison is restricted to a central disk
    (``margin`` pixels inside the inscribed circle, default ``H // 8``)
    because rotated corners leave the frame.
    """
    in_kind = in_kind or getattr(f, "in_kind", "image")
    out_kind = out_kind or getattr(f, "out_kind", "image")
    with T.no_grad():
        fx = _raw(f(x))
        fgx = _raw(f(_wrap_input(act(x, g, group, in_kind), x, group, in_kind)))
    gfx = act(fx, g, group, out_kind)
    diff = fgx - gfx
    ref = fx
    if quarter_turns(group.angle(g)) is None:
        h = fx.shape[-1]
        m = central_disk(h, h // 8 if margin is None else margin)
        diff, ref = diff[..., m], ref[..., m]
    denom = np.linalg.norm(ref)
    return float(np.linalg.norm(diff) / denom) if denom > 0 else float(np.linalg.norm(diff))


def _wrap_input(arr, like, group, kind):
    if isinstance(like, GroupFeatureMap):
        return GroupFeatureMap(arr, group)
    return T.Tensor(arr)
