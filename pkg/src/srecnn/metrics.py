"""PSNR and SSIM on magnitude image sequences."""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import tensor as T
from .mri import to_complex


def magnitude(x):
    """``|x|`` for a ``[2, T, H, W]`` pair tensor; real arrays pass through abs."""
    x = np.asarray(T.raw(x), dtype=np.float64)
    return np.abs(to_complex(x)) if x.ndim == 4 and x.shape[0] == 2 else np.abs(x)


def psnr(rec, ref, peak=None):
    """PSNR in dB of magnitude sequences; ``inf`` when identical."""
    a, b = np.asarray(rec, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    peak = np.max(np.abs(b)) if peak is None else peak
    return float(10.0 * np.log10(peak ** 2 / mse))


def _ssim_frame(a, b, data_range, win, k1, k2):
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    wa = sliding_window_view(a, (win, win))
    wb = sliding_window_view(b, (win, win))
    n = win * win
    mu_a, mu_b = wa.mean(axis=(-2, -1)), wb.mean(axis=(-2, -1))
    cov = n / (n - 1)
    va = (wa ** 2).mean(axis=(-2, -1)) - mu_a ** 2
    vb = (wb ** 2).mean(axis=(-2, -1)) - mu_b ** 2
    vab = (wa * wb).mean(axis=(-2, -1)) - mu_a * mu_b
    va, vb, vab = va * cov, vb * cov, vab * cov
    num = (2 * mu_a * mu_b + c1) * (2 * vab + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)
    return float(np.mean(num / den))


def ssim(rec, ref, data_range=None, win=7, k1=0.01, k2=0.03):
    """Mean local SSIM with a ``win x win`` uniform window, averaged over frames.

    Inputs are ``[H, W]`` or ``[T, H, W]``; only windows fully inside the
    frame contribute.  ``data_range`` defaults to the reference peak.
    """
    a, b = np.asarray(rec, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if data_range is None:
        data_range = float(np.max(np.abs(b))) or 1.0   # all-zero reference
    return float(np.mean([_ssim_frame(fa, fb, data_range, win, k1, k2)
                          for fa, fb in zip(a, b)]))
