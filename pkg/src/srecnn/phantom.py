"""Synthetic cine phantoms, rigid/shear augmentation and dataset files.

A phantom is a set of ellipses and oriented bars whose orientation,
size and position evolve periodically over the T frames, with a smooth
complex phase.  Rasterization is analytic with a soft edge, so sequences
are exactly reproducible from their spec.
"""

import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import mri, sret
from . import tensor as T
from .equivariant import rotate_angle


@dataclass
class Shape:
    kind: str                 # "ellipse" or "bar"
    center: tuple             # (x1, x2) in units of the field of view, origin at centre
    axes: tuple               # semi-axes (a, b), field-of-view units
    angle: float              # initial orientation, radians
    intensity: float
    rotation_rate: float = 0.0     # radians per frame
    pulsation: float = 0.0         # relative size amplitude over the cycle
    translation: tuple = (0.0, 0.0)  # displacement amplitude over the cycle


@dataclass
class PhantomSpec:
    size: int
    frames: int
    shapes: list = field(default_factory=list)
    phase_ramp: tuple = (0.0, 0.0)   # radians across the field of view
    edge: float = 0.75               # soft-edge width in pixels
    seed: int = 0

    def validate(self):
        if self.size < 2 or self.frames < 1:
            raise ValueError("phantom needs size >= 2 and frames >= 1")
        if self.shapes and not any(s.rotation_rate != 0 for s in self.shapes):
            raise ValueError("at least one shape must rotate")


def random_spec(size, frames, seed, n_shapes=5):
    """Random phantom: a body ellipse plus rotating/pulsating inner shapes."""
    rng = np.random.default_rng(seed)
    shapes = [Shape("ellipse", (0.0, 0.0), (0.42, 0.36), rng.uniform(0, np.pi), 0.35,
                    rotation_rate=0.0, pulsation=0.03)]
    for i in range(n_shapes - 1):
        kind = "bar" if i % 2 else "ellipse"
        r, phi = rng.uniform(0.0, 0.22), rng.uniform(0, 2 * np.pi)
        if kind == "bar":
            axes = (rng.uniform(0.10, 0.18), rng.uniform(0.015, 0.03))
        else:
            axes = (rng.uniform(0.05, 0.14), rng.uniform(0.03, 0.08))
        turns = rng.integers(-1, 2) or 1
        shapes.append(Shape(
            kind, (r * np.cos(phi), r * np.sin(phi)), axes, rng.uniform(0, np.pi),
            rng.uniform(0.3, 0.65),
            rotation_rate=turns * rng.choice([0.5, 1.0]) * 2 * np.pi / frames,
            pulsation=rng.uniform(0.0, 0.2),
            translation=tuple(rng.uniform(-0.03, 0.03, 2)),
        ))
    return PhantomSpec(size, frames, shapes, tuple(rng.uniform(-np.pi, np.pi, 2)), seed=seed)


def _coords(n):
    c = (n - 1) / 2.0
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return (j - c) / n, (c - i) / n


def _shape_frame(sh, t, frames, x1, x2, n, edge):
    cyc = np.sin(2 * np.pi * t / frames)
    ang = sh.angle + sh.rotation_rate * t
    scale = 1.0 + sh.pulsation * cyc
    cx = sh.center[0] + sh.translation[0] * cyc
    cy = sh.center[1] + sh.translation[1] * cyc
    dx, dy = x1 - cx, x2 - cy
    u = np.cos(ang) * dx + np.sin(ang) * dy
    v = -np.sin(ang) * dx + np.cos(ang) * dy
    a, b = sh.axes[0] * scale, sh.axes[1] * scale
    if sh.kind == "ellipse":
        rho = np.sqrt((u / a) ** 2 + (v / b) ** 2)
        dist = (1.0 - rho) * min(a, b) * n
    elif sh.kind == "bar":
        dist = np.minimum(a - np.abs(u), b - np.abs(v)) * n
    else:
        raise ValueError(f"unknown shape kind {sh.kind!r}")
    return sh.intensity * np.clip(dist / edge + 0.5, 0.0, 1.0)


def generate_phantom_sequence(spec):
    """``[2, T, H, W]`` complex sequence with magnitudes in ``[0, 1]``."""
    spec.validate()
    n = spec.size
    x1, x2 = _coords(n)
    mag = np.zeros((spec.frames, n, n))
    for t in range(spec.frames):
        for sh in spec.shapes:
            mag[t] += _shape_frame(sh, t, spec.frames, x1, x2, n, spec.edge)
    mag = np.clip(mag, 0.0, 1.0)
    phase = spec.phase_ramp[0] * x1 + spec.phase_ramp[1] * x2
    return mri.to_pair(mag * np.exp(1j * phase)[None])


def frame_at(spec, t):
    """Magnitude of the analytic frame at (possibly out-of-range) time ``t``."""
    n = spec.size
    x1, x2 = _coords(n)
    out = sum(_shape_frame(sh, t, spec.frames, x1, x2, n, spec.edge) for sh in spec.shapes)
    return np.clip(out, 0.0, 1.0)


# -- augmentation -----------------------------------------------------------

@dataclass
class AugmentBounds:
    quarter_turns: bool = True
    flips: bool = True
    max_angle: float = np.deg2rad(15.0)
    max_shear: float = 0.10
    max_shift: float = 4.0

    @classmethod
    def identity(cls):
        return cls(False, False, 0.0, 0.0, 0.0)


def _affine_resample(x, matrix, shift):
    """Bilinear resampling: output pixel at u reads input at ``matrix @ u + shift``."""
    n = x.shape[-1]
    c = (n - 1) / 2.0
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    u1, u2 = j - c, c - i
    s1 = matrix[0, 0] * u1 + matrix[0, 1] * u2 + shift[0]
    s2 = matrix[1, 0] * u1 + matrix[1, 1] * u2 + shift[1]
    si, sj = c - s2, c + s1
    i0, j0 = np.floor(si).astype(int), np.floor(sj).astype(int)
    fi, fj = si - i0, sj - j0
    out = np.zeros(x.shape)
    for di, wi in ((0, 1 - fi), (1, fi)):
        for dj, wj in ((0, 1 - fj), (1, fj)):
            ii, jj = i0 + di, j0 + dj
            ok = (ii >= 0) & (ii < n) & (jj >= 0) & (jj < n)
            out += x[..., np.clip(ii, 0, n - 1), np.clip(jj, 0, n - 1)] * (wi * wj * ok)
    return out


def augment_rigid_shear(x, bounds, seed):
    """Same random rigid+shear transform on every frame of ``[..., H, W]``.

    Quarter turns and flips are exact permutations; a small rotation,
    shear and shift, when drawn non-zero, are applied in one bilinear
    resampling.
    """
    x = np.asarray(T.raw(x), dtype=np.float64)
    if x.shape[-1] != x.shape[-2]:
        raise ValueError("augmentation needs square frames")
    rng = np.random.default_rng(seed)
    k = int(rng.integers(0, 4)) if bounds.quarter_turns else 0
    flip = bool(rng.integers(0, 2)) if bounds.flips else False
    angle = rng.uniform(-bounds.max_angle, bounds.max_angle) if bounds.max_angle else 0.0
    shear = rng.uniform(-bounds.max_shear, bounds.max_shear) if bounds.max_shear else 0.0
    shift = rng.uniform(-bounds.max_shift, bounds.max_shift, 2) if bounds.max_shift else np.zeros(2)
    out = rotate_angle(x, k * np.pi / 2)
    if flip:
        out = out[..., ::-1].copy()
    if angle or shear or np.any(shift):
        ca, sa = np.cos(angle), np.sin(angle)
        inv_rot = np.array([[ca, sa], [-sa, ca]])
        inv_shear = np.array([[1.0, -shear], [0.0, 1.0]])
        out = _affine_resample(out, inv_shear @ inv_rot, -shift)
    return out


# -- dataset ----------------------------------------------------------------

@dataclass
class AcquisitionConfig:
    coils: int = 4
    accel: float = 8.0
    noise_std: float = 0.0


SPLITS = ("train", "val", "test")


@dataclass
class KTSample:
    y: np.ndarray
    mask: np.ndarray
    coils: np.ndarray
    truth: np.ndarray
    name: str = ""


def _seeds(master, count):
    ss = np.random.SeedSequence(master).spawn(count)
    return [int(s.generate_state(1, dtype=np.uint32)[0]) for s in ss]


def _sample_files(root, idx):
    base = os.path.join(root, f"sample_{idx:04d}")
    return {k: f"{base}.{k}.sret" for k in ("truth", "y", "mask", "coils")}


def make_sample(size, frames, phantom_seed, mask_seed, noise_seed, acq):
    truth = generate_phantom_sequence(random_spec(size, frames, phantom_seed))
    coils = mri.simulate_coils(size, acq.coils)
    mask = mri.make_kt_mask(size, frames, acq.accel, mask_seed)
    y = mri.forward_op(truth, coils, mask).data
    if acq.noise_std > 0:
        rng = np.random.default_rng(noise_seed)
        y = y + acq.noise_std * rng.standard_normal(y.shape) * mask[None, None]
    return KTSample(y, mask, coils, truth)


def build_dataset(out_dir, n_train, n_val, n_test, size=64, frames=8, acq=None, seed=0):
    """Write phantom samples and ``manifest.txt``; returns the manifest dict."""
    if min(n_train, n_val, n_test) < 1:
        raise ValueError("every split needs at least one sample")
    acq = acq or AcquisitionConfig()
    os.makedirs(out_dir, exist_ok=True)
    total = n_train + n_val + n_test
    seeds = _seeds(seed, 3 * total)
    splits = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test
    manifest = {
        "size": size, "frames": frames, "coils": acq.coils, "accel": acq.accel,
        "noise_std": acq.noise_std, "seed": seed,
        "n_train": n_train, "n_val": n_val, "n_test": n_test,
    }
    for i, split in enumerate(splits):
        ps, ms, ns = seeds[3 * i:3 * i + 3]
        manifest[f"sample_{i:04d}"] = f"split:{split},phantom_seed:{ps},mask_seed:{ms},noise_seed:{ns}"
    write_manifest(os.path.join(out_dir, "manifest.txt"), manifest)
    _write_samples(out_dir, manifest)
    return manifest


def _write_samples(out_dir, manifest):
    acq = _acq(manifest)
    for i, rec in enumerate(sample_records(manifest)):
        s = make_sample(int(manifest["size"]), int(manifest["frames"]),
                        rec["phantom_seed"], rec["mask_seed"], rec["noise_seed"], acq)
        files = _sample_files(out_dir, i)
        for key in ("truth", "y", "mask", "coils"):
            sret.save(files[key], getattr(s, key))


def _acq(manifest):
    return AcquisitionConfig(int(manifest["coils"]), float(manifest["accel"]),
                             float(manifest["noise_std"]))


def write_manifest(path, manifest):
    with open(path, "w", encoding="utf-8") as f:
        for k, v in manifest.items():
            f.write(f"{k}={v}\n")


def read_manifest(path):
    with open(path, encoding="utf-8") as f:
        return dict(line.rstrip("\n").split("=", 1) for line in f if "=" in line)


def sample_records(manifest):
    out = []
    for k in sorted(k for k in manifest if k.startswith("sample_")):
        fields = dict(kv.split(":", 1) for kv in manifest[k].split(","))
        out.append({
            "index": int(k.split("_")[1]),
            "split": fields["split"],
            "phantom_seed": int(fields["phantom_seed"]),
            "mask_seed": int(fields["mask_seed"]),
            "noise_seed": int(fields["noise_seed"]),
        })
    return out


def regenerate(manifest_path, out_dir):
    """Rebuild all sample files from a manifest."""
    manifest = read_manifest(manifest_path)
    os.makedirs(out_dir, exist_ok=True)
    write_manifest(os.path.join(out_dir, "manifest.txt"), manifest)
    _write_samples(out_dir, manifest)
    return manifest


class Dataset:
    """Read access to a dataset directory, optionally at another acceleration."""

    def __init__(self, root):
        self.root = root
        self.manifest = read_manifest(os.path.join(root, "manifest.txt"))
        self.records = sample_records(self.manifest)

    def indices(self, split):
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [r["index"] for r in self.records if r["split"] == split]

    def load(self, idx, accel=None):
        files = _sample_files(self.root, idx)
        truth = sret.load(files["truth"])
        coils = sret.load(files["coils"])
        stored = float(self.manifest["accel"])
        if accel is None or float(accel) == stored:
            return KTSample(sret.load(files["y"]), sret.load(files["mask"]), coils, truth,
                            f"sample_{idx:04d}")
        rec = self.records[idx]
        acq = _acq(self.manifest)
        acq.accel = float(accel)
        h, t = truth.shape[-1], truth.shape[1]
        mask = mri.make_kt_mask(h, t, acq.accel, rec["mask_seed"])
        y = mri.forward_op(truth, coils, mask).data
        if acq.noise_std > 0:
            rng = np.random.default_rng(rec["noise_seed"])
            y = y + acq.noise_std * rng.standard_normal(y.shape) * mask[None, None]
        return KTSample(y, mask, coils, truth, f"sample_{idx:04d}")

    def orientation_bins(self, split, s):
        """Distinct orientation bins (of width pi/s) of rotating shapes in a split."""
        size, frames = int(self.manifest["size"]), int(self.manifest["frames"])
        bins = set()
        for idx in self.indices(split):
            spec = random_spec(size, frames, self.records[idx]["phantom_seed"])
            for sh in spec.shapes:
                if sh.rotation_rate:
                    bins.add(int((sh.angle % np.pi) // (np.pi / s)))
        return bins


def spec_dict(spec):
    return asdict(spec)
