"""Pure numpy versions of the convolution kernels.

All kernels use the cross-correlation convention, zero "same" padding in
space and circular padding in time.  Arrays are float64 and laid out as
``x[C_in, N, H, W]`` (spatial) or ``x[C_in, T, ...]`` (temporal).
"""

import numpy as np


def conv2d_forward(x, k):
    cin, n, h, w = x.shape
    cout, _, p, _ = k.shape
    c = p // 2
    xp = np.pad(x, ((0, 0), (0, 0), (c, c), (c, c)))
    out = np.zeros((cout, n, h, w))
    for i in range(p):
        for j in range(p):
            out += np.tensordot(k[:, :, i, j], xp[:, :, i:i + h, j:j + w], axes=(1, 0))
    return out


def conv2d_grad_input(g, k):
    cout, n, h, w = g.shape
    _, cin, p, _ = k.shape
    c = p // 2
    gp = np.zeros((cin, n, h + 2 * c, w + 2 * c))
    for i in range(p):
        for j in range(p):
            gp[:, :, i:i + h, j:j + w] += np.tensordot(k[:, :, i, j].T, g, axes=(1, 0))
    return gp[:, :, c:c + h, c:c + w].copy()


def conv2d_grad_kernel(g, x, p):
    cin, n, h, w = x.shape
    c = p // 2
    xp = np.pad(x, ((0, 0), (0, 0), (c, c), (c, c)))
    gk = np.empty((g.shape[0], cin, p, p))
    for i in range(p):
        for j in range(p):
            gk[:, :, i, j] = np.tensordot(g, xp[:, :, i:i + h, j:j + w],
                                          axes=([1, 2, 3], [1, 2, 3]))
    return gk


def conv1d_forward(x, k):
    q = k.shape[2]
    c = q // 2
    out = None
    for d in range(q):
        term = np.tensordot(k[:, :, d], np.roll(x, c - d, axis=1), axes=(1, 0))
        out = term if out is None else out + term
    return out


def conv1d_grad_input(g, k):
    q = k.shape[2]
    c = q // 2
    out = None
    for d in range(q):
        term = np.roll(np.tensordot(k[:, :, d].T, g, axes=(1, 0)), d - c, axis=1)
        out = term if out is None else out + term
    return out


def conv1d_grad_kernel(g, x, q):
    c = q // 2
    axes = list(range(1, x.ndim))
    gk = np.empty((g.shape[0], x.shape[0], q))
    for d in range(q):
        gk[:, :, d] = np.tensordot(g, np.roll(x, c - d, axis=1), axes=(axes, axes))
    return gk
