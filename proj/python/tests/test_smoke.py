import math

import numpy as np
import pytest

import eretinex as er


def test_endpoint_events_vanish():
    vox = er.voxelize([1, 1], [2, 2], [0.0, 1.0], [1, 1], width=4, height=4)
    assert vox.shape == (5, 4, 4)
    assert vox.dtype == np.float32
    assert not vox.any()


def test_timestamp_normalization():
    t = er.normalize_timestamps([0.0, 0.25, 1.0])
    assert t == pytest.approx([0.0, 1.5, 6.0])


def test_voxel_mass_matches_numpy_oracle():
    rng = np.random.default_rng(0)
    n, w, h, bins = 300, 9, 7, 7
    t = np.sort(rng.uniform(0, 2, n))
    x = rng.integers(0, w, n)
    y = rng.integers(0, h, n)
    p = rng.choice([-1, 1], n)
    full = er.voxelize(x, y, t, p, width=w, height=h, keep_first=0, keep_count=bins)
    ts = (bins - 1) * (t - t[0]) / (t[-1] - t[0])
    ref = np.zeros((bins, h, w))
    for b in range(bins):
        np.add.at(ref[b], (y, x), p * np.maximum(0.0, 1.0 - np.abs(b - ts)))
    np.testing.assert_allclose(full, ref, atol=1e-5)


def test_bad_polarity_raises_with_code():
    with pytest.raises(er.Error) as info:
        er.voxelize([0], [0], [0.0], [0], width=2, height=2)
    assert info.value.code == "InvalidPolarity"


def test_metrics():
    a = np.zeros((3, 16, 16), np.float32)
    b = np.full((3, 16, 16), 0.5, np.float32)
    assert er.psnr(a, b) == pytest.approx(6.0206, abs=1e-3)
    assert math.isinf(er.psnr(b, b))
    assert er.ssim(b, b) == pytest.approx(1.0, abs=1e-9)
    assert er.mae(a, b) == pytest.approx(0.5)


def test_lr_schedule_endpoints():
    assert er.lr_at(0, 100) == 1e-4
    assert er.lr_at(100, 100) == 1e-6


def test_zero_model_with_unit_map_is_identity():
    sample = er.synth_sample({"height": 16, "width": 16}, seed=3)
    ev = sample["events"]
    vox = er.voxelize(ev["x"], ev["y"], ev["t"], ev["p"], ev["width"], ev["height"])
    model = er.Model({"base_channels": 8, "fusion": "parallel"})
    model.zero_parameters()
    res = model.enhance(sample["low"], vox, lmap_override=1.0)
    np.testing.assert_array_equal(res["out"], sample["low"])
    out = er.Model(seed=1).enhance(sample["low"], vox)["out"]
    assert out.shape == (3, 16, 16)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_file_round_trips(tmp_path):
    arr = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    er.save_tensor(tmp_path / "a.ertx", arr)
    np.testing.assert_array_equal(er.load_tensor(tmp_path / "a.ertx"), arr)

    er.write_events(tmp_path / "e.evt", [0, 3], [1, 2], [0.1, 0.2], [1, -1], 4, 3)
    ev = er.read_events(tmp_path / "e.evt")
    assert list(ev["x"]) == [0, 3] and list(ev["p"]) == [1, -1]
    assert (ev["width"], ev["height"]) == (4, 3)

    model = er.Model({"base_channels": 8, "use_dwconv": False}, seed=5)
    model.save(tmp_path / "m.erck")
    again = er.Model.load(tmp_path / "m.erck")
    assert again.config == model.config
    assert again.num_parameters == model.num_parameters


def test_cost_and_gradcheck():
    cost = er.count_cost(height=32, width=32)
    assert cost["params"] == er.Model().num_parameters
    assert sum(cost["flops_by_stage"].values()) == cost["flops"]
    assert "conv2d" in er.gradcheck_ops()
    passed, err = er.gradcheck("conv2d")
    assert passed and err < 1e-3


def test_short_training_run(tmp_path):
    manifest = er.build_dataset(tmp_path / "data", 3, {"height": 16, "width": 16, "seed": 2})
    model, final, log = er.train(
        manifest, {"base_channels": 8, "blocks_per_stage": 1}, {"steps": 5, "crop": 16, "log_every": 1}
    )
    assert math.isfinite(final["psnr"]) and math.isfinite(final["ssim"])
    assert len(log) == 5
    again = model.evaluate(manifest, "test")
    assert again["psnr"] == pytest.approx(final["psnr"])
