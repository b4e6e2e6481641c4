"""Fourier-series filter parametrization.

A filter is a learned linear combination of cosine/sine basis functions
evaluated on the centred sampling grid.  Because the basis functions are
continuous, a filter rotated by any angle is obtained by evaluating them at
rotated grid coordinates instead of interpolating the discrete filter.

Grid convention: pixel ``(i, j)`` of a ``p x p`` filter sits at
``x = h * (j - c, c - i)`` with ``c = p // 2`` (``x1`` to the right, ``x2``
upward), so a positive angle is a counter-clockwise rotation as displayed
and a quarter turn matches ``np.rot90``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .tensor import Tensor, einsum, raw

_HALF_PI = np.pi / 2


def quarter_turns(angle, tol=1e-12):
    """Number of quarter turns if ``angle`` is grid-aligned, else ``None``."""
    r = angle / _HALF_PI
    n = round(r)
    return n % 4 if abs(r - n) < tol else None


def _rotation(angle):
    """Matrix of R(-angle), mapping output coordinates to basis coordinates."""
    n = quarter_turns(angle)
    if n is not None:
        c, s = [(1, 0), (0, 1), (-1, 0), (0, -1)][n]
    else:
        c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, s], [-s, c]], dtype=np.float64)


@dataclass(frozen=True)
class FourierBasis2D:
    """Cos/sin basis over centred frequencies ``(k - c, l - c)``.

    ``radius`` is the band limit in frequency-index units.  By default it is
    enforced only at angles that are not multiples of 90 degrees, so the
    full ``p*p`` span is available on the grid.  With ``limit_always`` the
    cutoff and the optional Gaussian ``envelope`` (width in grid steps) are
    applied at every angle, which keeps the filters of an 8-fold or finer
    group consistent rotated copies of one smooth function.
    """

    p: int
    h: float = 1.0
    radius: float | None = None
    envelope: float | None = None
    limit_always: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.p < 1 or self.p % 2 == 0:
            raise ValueError(f"filter size must be odd and positive, got {self.p}")
        if self.radius is None:
            object.__setattr__(self, "radius", self.p // 2 + 0.5)

    @classmethod
    def smooth(cls, p, h=1.0):
        """Half-band, Gaussian-windowed variant for groups with off-grid angles."""
        return cls(p, h, radius=(p // 2) / 2 + 0.5, envelope=0.18 * p, limit_always=True)

    @cached_property
    def descriptors(self):
        out = []
        for k in range(self.p):
            for l in range(self.p):
                out.append(("cos", k, l))
                if (k, l) != (self.p // 2, self.p // 2):
                    out.append(("sin", k, l))
        return tuple(out)

    @property
    def size(self):
        return len(self.descriptors)

    @cached_property
    def offsets(self):
        c = self.p // 2
        return np.array([(k - c, l - c) for _, k, l in self.descriptors], dtype=np.float64)

    @cached_property
    def frequencies(self):
        return 2.0 * np.pi / (self.p * self.h) * self.offsets

    @cached_property
    def grid(self):
        c = self.p // 2
        i, j = np.meshgrid(np.arange(self.p), np.arange(self.p), indexing="ij")
        return self.h * np.stack([j - c, c - i]).astype(np.float64)

    def in_band(self):
        return np.hypot(self.offsets[:, 0], self.offsets[:, 1]) <= self.radius + 1e-12

    def evaluate(self, angle=0.0):
        """Basis functions at the grid rotated by ``angle``: ``[size, p, p]``."""
        key = round(float(angle) % (2 * np.pi), 12)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        xr = np.einsum("ab,bij->aij", _rotation(angle), self.grid)
        phase = np.einsum("na,aij->nij", self.frequencies, xr)
        is_cos = np.array([d[0] == "cos" for d in self.descriptors])
        vals = np.where(is_cos[:, None, None], np.cos(phase), np.sin(phase))
        if self.limit_always or quarter_turns(angle) is None:
            vals[~self.in_band()] = 0.0
        if self.envelope is not None:
            r2 = np.sum(self.grid ** 2, axis=0)
            vals = vals * np.exp(-r2 / (2.0 * self.envelope ** 2))
        vals.setflags(write=False)
        self._cache[key] = vals
        return vals

    def matrix(self, angle=0.0):
        return self.evaluate(angle).reshape(self.size, -1)


@dataclass(frozen=True)
class FourierBasis1D:
    """Cos terms ``k = 0..q-1`` and sin terms ``k = 1..q-1`` on a length-q grid."""

    p: int
    h: float = 1.0

    def __post_init__(self):
        if self.p < 1 or self.p % 2 == 0:
            raise ValueError(f"filter length must be odd and positive, got {self.p}")

    @cached_property
    def descriptors(self):
        return tuple([("cos", k) for k in range(self.p)] + [("sin", k) for k in range(1, self.p)])

    @property
    def size(self):
        return len(self.descriptors)

    @cached_property
    def grid(self):
        return self.h * (np.arange(self.p) - self.p // 2).astype(np.float64)

    def evaluate(self):
        rows = []
        for kind, k in self.descriptors:
            arg = 2.0 * np.pi * k / (self.p * self.h) * self.grid
            rows.append(np.cos(arg) if kind == "cos" else np.sin(arg))
        return np.array(rows)

    def matrix(self):
        return self.evaluate()


def basis2d_eval(basis, angle=0.0):
    return Tensor(basis.evaluate(angle))


def basis1d_eval(basis):
    return Tensor(basis.evaluate())


class FilterBank:
    """Learned coefficients ``[..., basis.size]`` over a Fourier basis."""

    def __init__(self, basis, coeffs):
        if not isinstance(coeffs, Tensor):
            coeffs = Tensor(coeffs, requires_grad=True)
        if coeffs.shape[-1] != basis.size:
            raise ValueError(f"coefficients end in {coeffs.shape[-1]}, basis has {basis.size}")
        self.basis = basis
        self.coeffs = coeffs

    @property
    def is_2d(self):
        return isinstance(self.basis, FourierBasis2D)

    @classmethod
    def initialize(cls, basis, shape, rng, fan_in=None):
        """He-style init: synthesized filters get variance 2 / (fan_in * p^2).

        ``shape`` is the coefficient shape without the basis axis; ``fan_in``
        defaults to ``shape[1]``.
        """
        shape = tuple(shape)
        fan_in = shape[1] if fan_in is None else fan_in
        coeffs = rng.uniform(-1.0, 1.0, size=shape + (basis.size,))
        m = basis.matrix(0.0) if isinstance(basis, FourierBasis2D) else basis.matrix()
        filt = coeffs.reshape(-1, basis.size) @ m
        var = np.var(filt)
        if var > 0:
            coeffs *= np.sqrt(2.0 / (fan_in * basis.p ** 2) / var)
        return cls(basis, Tensor(coeffs, requires_grad=True))

    @classmethod
    def zeros(cls, basis, shape):
        return cls(basis, Tensor(np.zeros(tuple(shape) + (basis.size,)), requires_grad=True))


_LETTERS = "abcdefgh"


def _synth(coeffs, table):
    lead = _LETTERS[:coeffs.ndim - 1]
    tail = "xy"[:table.ndim - 1]
    return einsum(f"{lead}n,n{tail}->{lead}{tail}", coeffs, Tensor(table))


def synthesize_filter_2d(bank, angle=0.0):
    """Filters at ``angle``: coefficient shape with the basis axis -> ``p x p``."""
    if not bank.is_2d:
        raise TypeError("synthesize_filter_2d needs a bank over a 2D basis")
    return _synth(bank.coeffs, bank.basis.evaluate(angle))


def synthesize_filter_1d(bank):
    if bank.is_2d:
        raise TypeError("synthesize_filter_1d needs a bank over a 1D basis")
    return _synth(bank.coeffs, bank.basis.evaluate())


def fit_coefficients(target, basis, angle=0.0, rcond=1e-12):
    """Least-squares coefficients reproducing ``target`` on the grid.

    Raises ``ValueError`` if the basis does not span the filter space.
    """
    target = np.asarray(raw(target), dtype=np.float64)
    m = basis.matrix(angle) if isinstance(basis, FourierBasis2D) else basis.matrix()
    if target.size != m.shape[1]:
        raise ValueError(f"target has {target.size} values, basis grid has {m.shape[1]}")
    rank = np.linalg.matrix_rank(m)
    if rank < m.shape[1]:
        raise ValueError(f"basis is rank-deficient: rank {rank} < {m.shape[1]}")
    coeffs, *_ = np.linalg.lstsq(m.T, target.ravel(), rcond=rcond)
    return coeffs
