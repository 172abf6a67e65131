import math

import numpy as np
import pytest

import tsgcn


def tiny_config(**kw):
    args = dict(clip_len=8, channels=[4, 8], head_hidden=16)
    args.update(kw)
    return tsgcn.ModelConfig(**args)


def test_forward_is_a_distribution():
    model = tsgcn.ThreeStreamModel(tiny_config(), seed=1)
    clip = np.random.default_rng(0).normal(size=(2, 8, 18))
    p = model.forward(clip)
    assert p.shape == (2,)
    assert abs(p.sum() - 1.0) < 1e-9
    assert model.predict(clip) == int(np.argmax(p))
    with pytest.raises(tsgcn.ShapeError):
        model.forward(np.zeros((2, 7, 18)))


def test_motion_and_adjacency():
    clip = np.zeros((1, 3, 1))
    clip[0, :, 0] = [0.0, 0.1, 0.2]
    m = tsgcn.compute_motion(clip)
    assert m[0, 0, 0] == 0.0
    assert m[0, 1, 0] == pytest.approx(0.1)
    a = tsgcn.normalized_adjacency("coco18")
    assert a.shape == (18, 18)
    assert np.allclose(a, a.T, atol=1e-15)


def test_flops_and_parameters():
    assert tsgcn.septcn_flops(64, 64) == (4288, 12288)
    assert tsgcn.septcn_flops(1, 1) == (4, 3)
    cfg = tsgcn.ModelConfig()
    sep = tsgcn.ThreeStreamModel(cfg)
    dense = tsgcn.ThreeStreamModel(cfg.dense_variant())
    assert sep.count_parameters() < dense.count_parameters()
    assert sep.count_flops()["total"] < dense.count_flops()["total"]
    assert sum(v.size for v in sep.parameters().values()) == sep.count_parameters()


def test_metrics_and_welch():
    r = tsgcn.compute_metrics(np.array([[13, 2], [0, 220]]))
    assert round(r["classes"][0]["f1"], 2) == 92.86
    assert abs(r["macro_f1"] - 96.2) <= 0.05
    assert round(r["accuracy"], 2) == 99.15
    t, df = tsgcn.welch_t_test([2.9, 3.1], [5.3, 5.9])
    assert t == pytest.approx(-8.2219219164377862632, abs=1e-9)
    assert df == pytest.approx(1.2195121951219512195, abs=1e-9)


def test_save_load_and_evaluate(tmp_path):
    model = tsgcn.ThreeStreamModel(tiny_config(), seed=2)
    clips, labels = tsgcn.synth_clips(4, frames=8, seed=3)
    assert len(clips) == 8 and sorted(set(labels)) == [0, 1]
    path = tmp_path / "m.tsgc"
    model.save(path)
    loaded = tsgcn.load_model(path)
    assert np.array_equal(loaded.forward(clips[0]), model.forward(clips[0]))
    cm = tsgcn.evaluate(loaded, clips, labels)
    assert cm.sum() == 8


def test_gradcheck():
    passed, errors = tsgcn.gradcheck()
    assert passed
    assert errors["model"] < 1e-4
    assert all(math.isfinite(e) for e in errors.values())
