"""Multi-coil Cartesian dynamic MRI: forward model, adjoint, data consistency.

Complex arrays travel as real tensors with a leading (re, im) axis:

* image sequence ``x``  : ``[2, T, H, W]``
* coil sensitivities    : ``[2, C, H, W]``
* k-space ``y``         : ``[2, C, T, H, W]``
* sampling mask         : ``[T, H, W]`` (0/1, shared by coils)
"""

import math

import numpy as np

from . import tensor as T

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def to_complex(a):
    a = np.asarray(T.raw(a))
    return a[0] + 1j * a[1]


def to_pair(z):
    return np.stack([z.real, z.imag])


def fft2c(x):
    """Centred orthonormal 2D DFT over the last two axes (complex arrays)."""
    x = np.fft.ifftshift(x, axes=(-2, -1))
    x = np.fft.fft2(x, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(x, axes=(-2, -1))


def ifft2c(k):
    k = np.fft.ifftshift(k, axes=(-2, -1))
    k = np.fft.ifft2(k, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(k, axes=(-2, -1))


def _check(x, s, m, y=None):
    if x is not None:
        if x.ndim != 4 or x.shape[0] != 2:
            raise ValueError(f"image must be [2, T, H, W], got {x.shape}")
    if s.ndim != 4 or s.shape[0] != 2:
        raise ValueError(f"coils must be [2, C, H, W], got {s.shape}")
    if m.ndim != 3:
        raise ValueError(f"mask must be [T, H, W], got {m.shape}")
    if x is not None and (x.shape[1:] != m.shape or x.shape[2:] != s.shape[2:]):
        raise ValueError(f"shape mismatch: image {x.shape}, coils {s.shape}, mask {m.shape}")
    if y is not None and y.shape != (2, s.shape[1]) + m.shape:
        raise ValueError(f"k-space {y.shape} does not match coils {s.shape} / mask {m.shape}")


def _forward_np(x, s, m):
    xc, sc = to_complex(x), to_complex(s)
    coil_imgs = sc[:, None] * xc[None]                 # [C, T, H, W]
    return to_pair(m[None] * fft2c(coil_imgs))


def _adjoint_np(y, s, m):
    yc, sc = to_complex(y), to_complex(s)
    imgs = ifft2c(m[None] * yc)
    return to_pair(np.sum(np.conj(sc)[:, None] * imgs, axis=0))


def forward_op(x, coils, mask):
    """``y_c = M * F(S_c * x)``; differentiable in ``x``."""
    x = T.as_tensor(x)
    s, m = np.asarray(T.raw(coils)), np.asarray(T.raw(mask))
    _check(x, s, m)
    return T.linear_map(x, lambda a: _forward_np(a, s, m), lambda g: _adjoint_np(g, s, m))


def adjoint_op(y, coils, mask):
    """``A^H y = sum_c conj(S_c) * F^-1(M * y_c)``; differentiable in ``y``."""
    y = T.as_tensor(y)
    s, m = np.asarray(T.raw(coils)), np.asarray(T.raw(mask))
    _check(None, s, m, y)
    return T.linear_map(y, lambda a: _adjoint_np(a, s, m), lambda g: _forward_np(g, s, m))


def zero_filled(y, coils, mask):
    return adjoint_op(y, coils, mask)


def dc_gradient_step(x, y, coils, mask, eta):
    """``x - 2 eta A^H (A x - y)``, the gradient step on ``||Ax - y||^2``."""
    x = T.as_tensor(x)
    resid = T.sub(forward_op(x, coils, mask), T.as_tensor(y))
    grad = T.scale(adjoint_op(resid, coils, mask), 2.0)
    return T.sub(x, T.mul(grad, eta))


def make_kt_mask(h, t, accel, seed):
    """Variable-density Cartesian line mask ``[T, H, W]`` (lines along rows).

    Each frame keeps the four lines around k = 0 plus ``ceil(H/R) - 4``
    lines drawn by inverse-CDF sampling of a Gaussian density over distance
    from the centre.  The uniform variates follow a golden-ratio sequence
    with a seeded start, which spreads the picks across frames.
    """
    if accel < 1:
        raise ValueError("acceleration must be >= 1")
    budget = math.ceil(h / accel)
    if budget < 4:
        raise ValueError(f"line budget ceil({h}/{accel}) = {budget} is below the 4 centre lines")
    centre = h // 2
    fixed = [centre - 2, centre - 1, centre, centre + 1]
    rest = np.array([i for i in range(h) if i not in fixed])
    sigma = h / 4.0
    density = np.exp(-0.5 * ((rest - centre) / sigma) ** 2)
    u = np.random.default_rng(seed).random()
    mask = np.zeros((t, h, h))
    n_draw = budget - len(fixed)
    for frame in range(t):
        chosen = list(fixed)
        avail = np.ones(len(rest), dtype=bool)
        for m in range(n_draw):
            u = (u + GOLDEN) % 1.0
            w = np.where(avail, density, 0.0)
            cdf = np.cumsum(w) / w.sum()
            idx = min(int(np.searchsorted(cdf, u, side="right")), len(rest) - 1)
            while not avail[idx]:
                idx = (idx + 1) % len(rest)
            avail[idx] = False
            chosen.append(rest[idx])
        mask[frame, chosen, :] = 1.0
    return mask


def simulate_coils(h, ncoils):
    """Gaussian coil profiles on a ring around the field of view, normalized.

    Returns ``[2, C, H, W]`` with ``sum_c |S_c|^2 = 1`` at every pixel.
    """
    if ncoils < 1:
        raise ValueError("need at least one coil")
    c = (h - 1) / 2.0
    i, j = np.meshgrid(np.arange(h), np.arange(h), indexing="ij")
    x1, x2 = (j - c) / h, (c - i) / h
    maps = []
    for k in range(ncoils):
        phi = 2.0 * np.pi * k / ncoils
        cx, cy = 0.5 * np.cos(phi), 0.5 * np.sin(phi)
        mag = np.exp(-((x1 - cx) ** 2 + (x2 - cy) ** 2) / (2 * 0.35 ** 2))
        phase = np.pi * (np.cos(phi) * x2 - np.sin(phi) * x1) + phi
        maps.append(mag * np.exp(1j * phase))
    maps = np.array(maps)
    if ncoils == 1:
        maps = np.exp(1j * np.angle(maps))
    maps /= np.sqrt(np.sum(np.abs(maps) ** 2, axis=0, keepdims=True))
    return to_pair(maps)


def rotate_kspace_mask(mask, turns=1):
    """k-space counterpart of a quarter-turn image rotation.

    For even sizes the DFT origin sits at index ``n/2`` rather than the
    array centre, so the image rotation maps k-space by a quarter turn about
    ``n/2`` (plus a phase ramp that a binary mask does not see).
    """
    m = np.asarray(mask)
    for _ in range(turns % 4):
        if m.shape[-1] % 2 == 0:
            m = np.roll(m, -1, axis=-1)
        m = np.rot90(m, 1, axes=(-2, -1))
    return m.copy()


def power_norm(coils, mask, iters=50, seed=0):
    """Power-iteration estimate of the operator norm of A."""
    s, m = np.asarray(coils), np.asarray(mask)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2,) + m.shape)
    lam = 0.0
    for _ in range(iters):
        x = _adjoint_np(_forward_np(x, s, m), s, m)
        lam = np.linalg.norm(x)
        x /= lam
    return math.sqrt(lam)
