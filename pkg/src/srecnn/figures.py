"""8-bit PGM exports: frames, x-t profiles and amplified error maps."""

import os

import numpy as np

from .metrics import magnitude

ERROR_GAIN = 5.0


def write_pgm(path, img):
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def to_uint8(img, lo=None, hi=None):
    """Min-max (or given-range) scaling to 0..255; constant input maps to 0."""
    img = np.asarray(img, dtype=np.float64)
    lo = img.min() if lo is None else lo
    hi = img.max() if hi is None else hi
    if hi <= lo:
        return np.zeros(img.shape, dtype=np.uint8)
    return np.round(np.clip((img - lo) / (hi - lo), 0.0, 1.0) * 255.0).astype(np.uint8)


def xt_profile(mag):
    """Centre-row profile across frames: ``[T, W]``."""
    return mag[:, mag.shape[1] // 2, :]


def export_figures(rec, ref, out_dir):
    """Write recon/truth/error frames and x-t images; returns written paths.

    Magnitude images are min-max scaled.  Error maps show
    ``5 * |rec - ref|`` on the reference's min-max range, so an exact
    reconstruction gives black maps.
    """
    a, b = magnitude(rec), magnitude(ref)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    os.makedirs(out_dir, exist_ok=True)
    lo, hi = float(b.min()), float(b.max())
    err = ERROR_GAIN * np.abs(a - b)
    written = []

    def put(name, img, **rng):
        path = os.path.join(out_dir, name)
        write_pgm(path, to_uint8(img, **rng))
        written.append(path)

    for t in range(a.shape[0]):
        put(f"recon_t{t:02d}.pgm", a[t])
        put(f"truth_t{t:02d}.pgm", b[t])
        put(f"error_t{t:02d}.pgm", err[t], lo=0.0, hi=hi - lo)
    put("xt_recon.pgm", xt_profile(a))
    put("xt_truth.pgm", xt_profile(b))
    put("xt_error.pgm", xt_profile(err), lo=0.0, hi=hi - lo)
    return written
