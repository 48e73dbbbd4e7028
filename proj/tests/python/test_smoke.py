import numpy as np
import pytest

import ctrlvdiff as cv


def test_registry_order():
    assert cv.modalities() == [
        "rgb", "depth", "normal", "albedo", "roughness", "metallic", "segmentation", "canny",
    ]


def test_generate_clip_shapes_and_determinism():
    a = cv.generate_clip(3, frames=2, height=16, width=16)
    b = cv.generate_clip(3, frames=2, height=16, width=16)
    mods = a["modalities"]
    assert set(mods) == set(cv.modalities())
    assert mods["rgb"].shape == (2, 16, 16, 3)
    assert mods["depth"].shape == (2, 16, 16, 1)
    assert mods["rgb"].dtype == np.float32
    for name in mods:
        np.testing.assert_array_equal(mods[name], b["modalities"][name])
    assert a["caption"] == b["caption"]
    norms = np.linalg.norm(mods["normal"], axis=-1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-5)


def test_codec_round_trip_and_norm():
    codec = cv.Codec(2, seed=1234)
    x = np.random.default_rng(0).random((2, 8, 8, 3), dtype=np.float32)
    z = codec.encode(x)
    assert z.shape == (2, 4, 4, 12)
    np.testing.assert_allclose(codec.decode(z), x, atol=1e-6)
    assert np.linalg.norm(z) == pytest.approx(np.linalg.norm(x.astype(np.float64)), rel=1e-6)


def test_roles_partition():
    for seed in range(200):
        r = cv.assign_roles(seed)
        roles = list(r["roles"].values())
        assert len(roles) == 8
        assert "noisy" in roles
        assert set(roles) <= {"condition", "none", "noisy"}


def test_metric_closed_forms():
    gt = np.array([0.75, 1.0, 1.5, 2.0], dtype=np.float32).reshape(1, 1, 4, 1)
    assert cv.depth_metrics(gt * 1.25, gt, align=False)["delta1"] == 0.0
    assert cv.depth_metrics(gt * 2.0, gt)["abs_rel"] == pytest.approx(0.0, abs=1e-9)

    img = np.random.default_rng(1).random((1, 8, 8, 3), dtype=np.float32) * 0.9
    assert cv.psnr(img, img) == 100.0
    assert cv.psnr(img + np.float32(0.1), img) == pytest.approx(20.0, abs=1e-3)
    assert cv.ssim(img, img) == pytest.approx(1.0)

    fade = np.stack([np.full((2, 2, 3), 0.8 - 0.1 * t, dtype=np.float32) for t in range(4)])
    assert cv.temporal_consistency(fade) == pytest.approx(0.9, abs=1e-6)


def test_seg_iou_on_palette_rendering():
    ids = np.zeros((1, 4, 4, 1), dtype=np.float32)
    ids[:, 2:] = 5
    colors = np.zeros((1, 4, 4, 3), dtype=np.float32)
    for i in (0, 5):
        colors[ids[..., 0] == i] = cv.palette_color(i)
    miou, per = cv.seg_iou(colors, ids, 2)
    assert miou == 1.0
    assert set(per) == {0, 5}


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(ValueError):
        cv.depth_metrics(np.zeros((1, 1, 2, 1), np.float32), np.zeros((1, 1, 2, 1), np.float32))
    with pytest.raises(ValueError):
        cv.read_clip(tmp_path, "missing")


def test_clip_store_and_cli(tmp_path):
    clip = cv.generate_clip(0, frames=2, height=8, width=8)
    cv.write_clip(tmp_path / "data", "clip-0000", clip["modalities"], clip["caption"], seed=0)
    back = cv.read_clip(tmp_path / "data", "clip-0000", ["depth"])
    assert list(back["modalities"]) == ["depth"]
    np.testing.assert_array_equal(back["modalities"]["depth"], clip["modalities"]["depth"])

    code, out, _ = cv.run_cli(["inspect", str(tmp_path / "data" / "clip-0000"), "--out", str(tmp_path / "i")])
    assert code == 0
    assert "segmentation" in out
    code, _, err = cv.run_cli(["nonsense"])
    assert code == 1 and err


def test_train_and_understand(tmp_path):
    sets = []
    for kv in ("model.dim=16", "model.layers=1", "model.heads=2", "model.max_frames=2", "data.frames=2",
               "data.height=8", "data.width=8", "model.patch=2", "stages.steps_I=2", "schedule.num_steps=50"):
        sets += ["--set", kv]
    data, run = str(tmp_path / "data"), str(tmp_path / "run")
    assert cv.run_cli(["gen-data", "--clips", "3", "--out", data] + sets)[0] == 0
    assert cv.run_cli(["train", "--stage", "I", "--data", data, "--out", run] + sets)[0] == 0
    model = cv.Model.load(tmp_path / "run" / "stage-I.ckpt")
    rgb = cv.read_clip(data, "clip-0000")["modalities"]["rgb"]
    pred = model.understand(rgb, steps=2, seed=4)
    assert set(pred) == set(cv.modalities()) - {"rgb"}
    np.testing.assert_allclose(np.linalg.norm(pred["normal"], axis=-1), 1.0, atol=1e-4)
    again = model.understand(rgb, steps=2, seed=4)
    np.testing.assert_array_equal(pred["depth"], again["depth"])
