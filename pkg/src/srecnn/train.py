"""Training loop and evaluation of unrolled models on a phantom dataset."""

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import mri
from . import tensor as T
from .metrics import magnitude, psnr, ssim
from .model import UnrolledConfig, build_model, reconstruct, save_model
from .optim import Adam
from .phantom import AugmentBounds, Dataset, augment_rigid_shear

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    data: str
    model: UnrolledConfig = field(default_factory=UnrolledConfig)
    epochs: int = 50
    batch_size: int = 1
    lr: float = 1e-3
    decay: float = 0.95
    accel: float | None = None
    seed: int = 0
    augment: bool = True
    max_train: int | None = None
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch size >= 1")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")


def _augmented(sample, seed, bounds):
    truth = augment_rigid_shear(sample.truth, bounds, seed)
    y = mri.forward_op(truth, sample.coils, sample.mask).data
    return y, truth


def sample_loss(model, y, coils, mask, truth):
    return T.l1_loss(reconstruct(y, coils, mask, model), truth)


def train(cfg, model=None, samples=None):
    """Minimize the pixel-wise l1 loss; returns ``(model, per-step losses)``.

    ``samples`` may supply preloaded ``KTSample`` objects instead of the
    dataset's train split.  Gradients within a batch are accumulated in
    sample order.
    """
    model = model or build_model(cfg.model)
    if samples is None:
        ds = Dataset(cfg.data)
        idx = ds.indices("train")[:cfg.max_train]
        samples = [ds.load(i, cfg.accel) for i in idx]
    history = []
    if cfg.epochs == 0:
        return model, history
    opt = Adam(model.parameters(), lr=cfg.lr, decay=cfg.decay)
    bounds = AugmentBounds()
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(samples))
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            opt.zero_grad()
            batch_loss = 0.0
            for i in order[start:start + cfg.batch_size]:
                s = samples[i]
                if cfg.augment:
                    y, truth = _augmented(s, int(rng.integers(2 ** 31)), bounds)
                else:
                    y, truth = s.y, s.truth
                loss = sample_loss(model, y, s.coils, s.mask, truth)
                if not math.isfinite(loss.item()):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, step {len(history)}, sample {s.name}")
                T.backward(T.scale(loss, 1.0 / len(order[start:start + cfg.batch_size])))
                batch_loss += loss.item()
            opt.step()
            history.append(batch_loss / len(order[start:start + cfg.batch_size]))
            epoch_losses.append(history[-1])
        opt.end_epoch()
        log.info("epoch %d  loss %.5f  lr %.2e", epoch, np.mean(epoch_losses), opt.lr)
        if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0 and cfg.checkpoint_dir:
            os.makedirs(cfg.checkpoint_dir, exist_ok=True)
            save_model(model, os.path.join(cfg.checkpoint_dir, f"epoch_{epoch + 1:03d}.srem"))
    return model, history


@dataclass
class MetricsRecord:
    sample: str
    accel: float
    method: str
    psnr_db: float
    ssim: float
    seconds: float


CSV_FIELDS = ("sample", "accel", "method", "psnr_db", "ssim", "seconds")


def evaluate(model, data, split="test", accel=None, csv_path=None, samples=None):
    """Per-sample PSNR/SSIM/time for the model and the zero-filled baseline.

    The CSV holds one row per (sample, method) followed by ``mean`` and
    ``std`` (population) rows per method.
    """
    if samples is None:
        ds = Dataset(data)
        samples = [ds.load(i, accel) for i in ds.indices(split)]
    accel = accel if accel is not None else (float(Dataset(data).manifest["accel"]) if data else 0.0)
    method = model.cfg.mode if model is not None else None
    records = []
    with T.no_grad():
        for s in samples:
            ref = magnitude(s.truth)
            t0 = time.perf_counter()
            zf = mri.zero_filled(s.y, s.coils, s.mask).data
            t_zf = time.perf_counter() - t0
            records.append(_record(s.name, accel, "zero_filled", magnitude(zf), ref, t_zf))
            if model is not None:
                t0 = time.perf_counter()
                rec = reconstruct(s.y, s.coils, s.mask, model).data
                dt = time.perf_counter() - t0
                records.append(_record(s.name, accel, method, magnitude(rec), ref, dt))
    if csv_path:
        write_csv(csv_path, records)
    return records


def _record(name, accel, method, rec, ref, seconds):
    return MetricsRecord(name, float(accel), method, psnr(rec, ref), ssim(rec, ref), seconds)


def summarize(records):
    out = {}
    for method in dict.fromkeys(r.method for r in records):
        rows = [r for r in records if r.method == method]
        stats = {}
        for key in ("psnr_db", "ssim", "seconds"):
            vals = np.array([getattr(r, key) for r in rows], dtype=np.float64)
            stats[key] = (float(np.mean(vals)), float(np.std(vals)))
        out[method] = stats
    return out


def write_csv(path, records):
    summary = summarize(records)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(CSV_FIELDS)
        for r in records:
            w.writerow([r.sample, repr(r.accel), r.method, repr(r.psnr_db), repr(r.ssim),
                        repr(r.seconds)])
        accel = records[0].accel if records else 0.0
        for method, stats in summary.items():
            for j, label in enumerate(("mean", "std")):
                w.writerow([label, repr(accel), method] +
                           [repr(stats[k][j]) for k in ("psnr_db", "ssim", "seconds")])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
