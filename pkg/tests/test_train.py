import csv
import math

import numpy as np
import pytest

from srecnn.model import UnrolledConfig, build_model
from srecnn.phantom import AcquisitionConfig, build_dataset, make_sample
from srecnn.train import (
    CSV_FIELDS,
    TrainConfig,
    TrainingDiverged,
    _record,
    evaluate,
    read_csv,
    summarize,
    train,
)

TINY = UnrolledConfig(unrolls=1, filters=(2, 2, 2))


@pytest.fixture(scope="module")
def tiny_ds(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    build_dataset(str(root), 3, 1, 2, size=16, frames=4, acq=AcquisitionConfig(2, 4), seed=1)
    return str(root)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(data="", epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(data="", batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(data="", decay=1.5)
    cfg = TrainConfig(data="")
    assert (cfg.lr, cfg.decay, cfg.batch_size, cfg.epochs) == (1e-3, 0.95, 1, 50)


def test_zero_epochs_returns_initial_model(tiny_ds):
    model = build_model(TINY)
    before = model.state_hash()
    out, history = train(TrainConfig(data=tiny_ds, model=TINY, epochs=0), model=model)
    assert out is model and history == [] and model.state_hash() == before


def test_overfit_single_sample():
    s = make_sample(32, 8, 1, 2, 3, AcquisitionConfig(4, 4))
    cfg = TrainConfig(data="", model=UnrolledConfig(), epochs=200, decay=1.0, augment=False)
    _, history = train(cfg, samples=[s])
    assert len(history) == 200
    assert history[-1] < 0.2 * history[0]


def test_training_is_deterministic(tiny_ds, tmp_path):
    cfg = TrainConfig(data=tiny_ds, model=TINY, epochs=2, batch_size=2, seed=3,
                      checkpoint_every=1, checkpoint_dir=str(tmp_path / "ck"))
    m1, h1 = train(cfg)
    m2, h2 = train(cfg)
    assert h1 == h2 and len(h1) == 4
    assert m1.state_hash() == m2.state_hash()
    assert sorted(p.name for p in (tmp_path / "ck").iterdir()) == ["epoch_001.srem", "epoch_002.srem"]


def test_divergence_is_reported(tiny_ds):
    model = build_model(TINY)
    model.etas[0].data = np.array(np.nan)
    with pytest.raises(TrainingDiverged, match="non-finite"):
        train(TrainConfig(data=tiny_ds, model=TINY, epochs=1, augment=False), model=model)


def test_evaluate_csv(tiny_ds, tmp_path):
    model = build_model(TINY)
    before = model.state_hash()
    path = tmp_path / "m.csv"
    records = evaluate(model, tiny_ds, "test", None, str(path))
    assert model.state_hash() == before
    assert [r.method for r in records] == ["zero_filled", "sre"] * 2
    rows = read_csv(path)
    assert tuple(rows[0].keys()) == CSV_FIELDS
    per = [r for r in rows if r["sample"] not in ("mean", "std")]
    assert {r["sample"] for r in per if r["method"] == "zero_filled"} == {"sample_0004", "sample_0005"}
    for method in ("zero_filled", "sre"):
        vals = {k: np.array([float(r[k]) for r in per if r["method"] == method])
                for k in ("psnr_db", "ssim", "seconds")}
        mean = next(r for r in rows if r["sample"] == "mean" and r["method"] == method)
        std = next(r for r in rows if r["sample"] == "std" and r["method"] == method)
        for k, v in vals.items():
            assert abs(float(mean[k]) - v.mean()) < 1e-9
            assert abs(float(std[k]) - v.std()) < 1e-9
    assert all(float(r["accel"]) == 4.0 for r in rows)


def test_evaluate_other_acceleration(tiny_ds):
    recs = evaluate(None, tiny_ds, "test", accel=2)
    assert {r.accel for r in recs} == {2.0}
    assert all(r.method == "zero_filled" for r in recs)
    better = np.mean([r.psnr_db for r in recs])
    worse = np.mean([r.psnr_db for r in evaluate(None, tiny_ds, "test", accel=4)])
    assert better > worse


def test_truth_against_itself():
    ref = np.random.default_rng(0).random((2, 8, 8))
    r = _record("s", 4.0, "sre", ref, ref, 0.0)
    assert r.ssim == pytest.approx(1.0) and r.psnr_db == math.inf


def test_summarize_population_std():
    recs = [_record("a", 1, "zf", np.full((8, 8), v), np.ones((8, 8)), t)
            for v, t in ((0.9, 1.0), (0.8, 3.0))]
    stats = summarize(recs)["zf"]
    assert stats["seconds"] == (2.0, 1.0)
