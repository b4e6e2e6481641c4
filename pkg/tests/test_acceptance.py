"""Acceptance criteria, one test each.

Every criterion is a function returning ``(passed, detail)``.  Results are
printed as one PASS/FAIL line per criterion at the end of the pytest run,
or directly with ``python3 tests/test_acceptance.py``.
"""

import dataclasses
import os
import subprocess
import sys
import tempfile
import time

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from srecnn import mri
from srecnn import tensor as T
from srecnn.checks import block_error, layer_errors
from srecnn.equivariant import (
    GroupConv2d,
    GroupProjection,
    LiftingConv,
    PlainConv1d,
    PlainConv2d,
    ReLU,
    RotationGroup,
    Sequential,
    TemporalGroupConv,
    UntiedTemporalConv,
    equivariance_error,
)
from srecnn.filters import FourierBasis2D, fit_coefficients
from srecnn.model import UnrolledConfig, build_model, reconstruct
from srecnn.phantom import AcquisitionConfig, Dataset, build_dataset
from srecnn.train import TrainConfig, evaluate, read_csv, summarize, train

RESULTS = {}

G4 = RotationGroup(4)
G8 = RotationGroup(8)


def criterion_1():
    """Span exactness of the 5x5 basis."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    basis = FourierBasis2D(5)
    m = basis.matrix()
    worst = 0.0
    for _ in range(100):
        target = rng.standard_normal((5, 5))
        c = fit_coefficients(target, basis)
        worst = max(worst, np.max(np.abs((c @ m).reshape(5, 5) - target)))
    dt = time.perf_counter() - t0
    return worst < 1e-8 and dt < 5, f"max residual {worst:.2e}, {dt:.2f}s"


def _stack(rng, temporal="group"):
    tlayer = (TemporalGroupConv(4, 4, G4, 3, rng) if temporal == "group"
              else UntiedTemporalConv(4, 4, G4, 3, rng))
    return Sequential(LiftingConv(2, 4, G4, 3, rng), ReLU("group"), tlayer, ReLU("group"),
                      GroupConv2d(4, 4, G4, 3, rng), ReLU("group"),
                      GroupProjection(4, 2, G4, 3, rng))


def criterion_2():
    """Exact layer/block equivariance at s=4 with a plain-conv negative control."""
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        for g in (1, 2, 3):
            errs = layer_errors(G4, g, size=16, seed=seed)
            errs["block"] = block_error(G4, g, size=16, seed=seed)
            worst = max(worst, max(errs.values()))
    rng = np.random.default_rng(0)
    plain = PlainConv2d(2, 4, 3, rng)
    control = min(equivariance_error(plain, rng.standard_normal((2, 4, 16, 16)), 1, G4)
                  for _ in range(10))
    dt = time.perf_counter() - t0
    ok = worst < 1e-10 and control > 1e-3 and dt < 30
    return ok, f"max SRE error {worst:.2e}, min plain error {control:.2e}, {dt:.1f}s"


def criterion_3():
    """Replacing the group temporal layer with an untied 1D conv breaks equivariance."""
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 4, 16, 16))
    tied = equivariance_error(_stack(np.random.default_rng(2)), x, 1, G4)
    untied = equivariance_error(_stack(np.random.default_rng(2), "untied"), x, 1, G4)
    return tied < 1e-10 and untied > 1e-3, f"group temporal {tied:.2e}, untied {untied:.2e}"


def criterion_4():
    """Approximate equivariance at s=8 on band-limited inputs."""
    rng = np.random.default_rng(0)
    sre = Sequential(LiftingConv(2, 4, G8, 5, rng), ReLU("group"),
                     TemporalGroupConv(4, 4, G8, 3, rng), ReLU("group"),
                     GroupConv2d(4, 4, G8, 5, rng), ReLU("group"),
                     GroupProjection(4, 2, G8, 5, rng))
    plain = Sequential(PlainConv2d(2, 8, 5, rng), ReLU(), PlainConv1d(8, 8, 3, rng), ReLU(),
                       PlainConv2d(8, 8, 5, rng), ReLU(), PlainConv2d(8, 2, 5, rng))
    e_sre, e_plain = [], []
    for seed in range(5):
        x = gaussian_filter(np.random.default_rng(seed).standard_normal((2, 4, 32, 32)),
                            (0, 0, 2, 2))
        for g in (1, 3):
            e_sre.append(equivariance_error(sre, x, g, G8))
            e_plain.append(equivariance_error(plain, x, g, G8))
    worst, ratio = max(e_sre), np.mean(e_plain) / np.mean(e_sre)
    return worst < 5e-2 and ratio >= 10, f"max SRE error {worst:.3f}, plain/SRE ratio {ratio:.1f}"


def criterion_5():
    """Adjointness and the identity-proximal gradient-descent oracle."""
    rng = np.random.default_rng(0)
    worst_adj = 0.0
    for _ in range(20):
        h, t, c = 8, 3, 3
        x = rng.standard_normal((2, t, h, h))
        y = rng.standard_normal((2, c, t, h, h))
        s = mri.simulate_coils(h, c)
        m = mri.make_kt_mask(h, t, 2, int(rng.integers(1000)))
        ax, ahy = mri.forward_op(x, s, m).data, mri.adjoint_op(y, s, m).data
        worst_adj = max(worst_adj, abs(np.vdot(ax, y) - np.vdot(x, ahy))
                        / (np.linalg.norm(ax) * np.linalg.norm(y)))
    worst_gd = 0.0
    x = rng.standard_normal((2, 4, 16, 16))
    s = mri.simulate_coils(16, 4)
    m = mri.make_kt_mask(16, 4, 4, 0)
    y = mri.forward_op(x, s, m).data
    for k in (1, 2, 5):
        model = build_model(UnrolledConfig(unrolls=k, zero_last=True, filters=(2, 2, 2), eta0=0.7))
        rec = reconstruct(y, s, m, model).data
        xk = mri._adjoint_np(y, s, m)
        for _ in range(k):
            xk = xk - 1.4 * mri._adjoint_np(mri._forward_np(xk, s, m) - y, s, m)
        worst_gd = max(worst_gd, np.max(np.abs(rec - xk)))
    ok = worst_adj < 1e-10 and worst_gd < 1e-10
    return ok, f"adjoint error {worst_adj:.2e}, GD oracle error {worst_gd:.2e}"


def criterion_6():
    """End-to-end finite-difference check on an 8x8x2 single-coil problem."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 2, 8, 8))
    s = mri.simulate_coils(8, 1)
    m = mri.make_kt_mask(8, 2, 2, 0)
    y = mri.forward_op(x, s, m).data
    worst = {}
    for mode in ("sre", "plain"):
        model = build_model(UnrolledConfig(filters=(3, 3, 2), temporal_size=1, mode=mode, seed=5))

        def loss():
            return T.l1_loss(reconstruct(y, s, m, model), x)

        T.backward(loss())
        for name, p in model.named_parameters():
            d = rng.standard_normal(p.shape)
            analytic = float(np.sum(p.grad * d))
            base = p.data.copy()
            with T.no_grad():
                p.data = base + 1e-6 * d
                fp = loss().item()
                p.data = base - 1e-6 * d
                fm = loss().item()
            p.data = base
            fd = (fp - fm) / 2e-6
            worst[f"{mode}:{name}"] = abs(analytic - fd) / (abs(analytic) + 1e-8)
    dt = time.perf_counter() - t0
    name = max(worst, key=worst.get)
    ok = max(worst.values()) < 1e-4 and dt < 120
    return ok, f"{len(worst)} parameter groups, worst {worst[name]:.1e} ({name}), {dt:.1f}s"


# desk-scale quality comparison: the dataset has the default 100/10/20 split
# and both models see the first 40 training samples for 5 epochs.
DESK = dict(size=64, frames=8, coils=4, accel=8, seed=1, n_train=100, n_val=10, n_test=20)
DESK_TRAIN = dict(epochs=5, max_train=40, augment=False, lr=1e-3, decay=0.95, seed=0)


def criterion_7(workdir=None):
    """Trained SRE beats zero-filled by 3 dB and a parameter-matched plain model."""
    own = workdir is None
    tmp = tempfile.TemporaryDirectory() if own else None
    root = os.path.join(tmp.name if own else workdir, "desk")
    try:
        build_dataset(root, DESK["n_train"], DESK["n_val"], DESK["n_test"], DESK["size"],
                      DESK["frames"], AcquisitionConfig(DESK["coils"], DESK["accel"]), DESK["seed"])
        ds = Dataset(root)
        train_set = [ds.load(i) for i in ds.indices("train")[:DESK_TRAIN["max_train"]]]
        test_set = [ds.load(i) for i in ds.indices("test")]
        sre_cfg = UnrolledConfig(unrolls=2, group_order=4, filters=(8, 8, 2), mode="sre")
        means, times, counts = {}, {}, {}
        for mcfg in (sre_cfg, dataclasses.replace(sre_cfg, mode="plain")):
            t0 = time.process_time()
            model, _ = train(TrainConfig(data=root, model=mcfg, **DESK_TRAIN), samples=train_set)
            times[mcfg.mode] = time.process_time() - t0
            counts[mcfg.mode] = model.parameter_count()
            stats = summarize(evaluate(model, root, "test", samples=test_set))
            means[mcfg.mode] = stats[mcfg.mode]["psnr_db"][0]
            means["zero_filled"] = stats["zero_filled"]["psnr_db"][0]
    finally:
        if own:
            tmp.cleanup()
    matched = abs(counts["plain"] / counts["sre"] - 1) <= 0.05
    ok = (means["sre"] >= means["zero_filled"] + 3 and means["sre"] > means["plain"]
          and matched and max(times.values()) < 1800)
    detail = (f"PSNR sre {means['sre']:.2f} / plain {means['plain']:.2f} / zero-filled "
              f"{means['zero_filled']:.2f} dB; params {counts['sre']} vs {counts['plain']}; "
              f"CPU {times['sre']:.0f}s / {times['plain']:.0f}s")
    return ok, detail


def _cli(args, cwd):
    cmd = [sys.executable, "-m", "srecnn", *map(str, args)]
    return subprocess.run(cmd, cwd=cwd, capture_output=True, text=True, check=True)


def _pipeline(cwd):
    _cli(["gen", "--out", "data", "--n-train", 2, "--n-val", 1, "--n-test", 2, "--size", 16,
          "--frames", 4, "--coils", 2, "--seed", 5, "--accel", 4], cwd)
    _cli(["mask", "--size", 16, "--frames", 4, "--accel", 4, "--seed", 5, "--out", "mask.sret"], cwd)
    _cli(["train", "--data", "data", "--accel", 4, "--mode", "sre", "--group-order", 4,
          "--unrolls", 1, "--filters", "2-2-2", "--spatial-size", 3, "--temporal-size", 3,
          "--epochs", 2, "--lr", 1e-3, "--decay", 0.95, "--seed", 5, "--out", "model.srem"], cwd)
    _cli(["eval", "--model", "model.srem", "--data", "data", "--split", "test", "--accel", 4,
          "--csv", "metrics.csv"], cwd)
    _cli(["recon", "--model", "model.srem", "--sample", "data/sample_0003", "--out", "rec.sret"], cwd)
    _cli(["figures", "--recon", "rec.sret", "--truth", "data/sample_0003.truth.sret",
          "--out-dir", "figs"], cwd)
    return read_csv(os.path.join(cwd, "metrics.csv"))


def criterion_8():
    """CLI pipeline from an empty directory, CSV consistency, PGM headers, determinism."""
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        rows_a, rows_b = _pipeline(a), _pipeline(b)
        figs = sorted(os.listdir(os.path.join(a, "figs")))
        headers_ok = bool(figs) and all(
            open(os.path.join(a, "figs", f), "rb").read(3) == b"P5\n" for f in figs)
    per = [r for r in rows_a if r["sample"] not in ("mean", "std")]
    stats_err = 0.0
    for method in {r["method"] for r in per}:
        for key in ("psnr_db", "ssim", "seconds"):
            v = np.array([float(r[key]) for r in per if r["method"] == method])
            for label, ref in (("mean", v.mean()), ("std", v.std())):
                row = next(r for r in rows_a if r["sample"] == label and r["method"] == method)
                stats_err = max(stats_err, abs(float(row[key]) - ref))
    numeric = ("accel", "psnr_db", "ssim")
    same = [[r[k] for k in ("sample", "method") + numeric] for r in rows_a] == \
           [[r[k] for k in ("sample", "method") + numeric] for r in rows_b]
    ok = stats_err < 1e-9 and headers_ok and same
    return ok, (f"{len(figs)} PGM files, mean/std recompute error {stats_err:.1e}, "
                f"rerun identical: {same}")


CRITERIA = [
    (1, "parametrization exactness", criterion_1),
    (2, "exact layer equivariance (s=4)", criterion_2),
    (3, "temporal-layer necessity", criterion_3),
    (4, "approximate equivariance (s=8)", criterion_4),
    (5, "operator correctness", criterion_5),
    (6, "gradient integrity", criterion_6),
    (7, "trained SRE vs zero-filled and plain", criterion_7),
    (8, "end-to-end CLI", criterion_8),
]


def _line(num, title, ok, detail):
    return f"criterion {num} [{title}]: {'PASS' if ok else 'FAIL'} - {detail}"


@pytest.mark.parametrize("num,title,fn", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(num, title, fn):
    ok, detail = fn()
    RESULTS[num] = _line(num, title, ok, detail)
    print(RESULTS[num])
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for num, title, fn in CRITERIA:
        ok, detail = fn()
        failed += not ok
        print(_line(num, title, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
