import math
import os
import tempfile

import numpy as np
import pytest

try:
    import _gacnet as g
except ImportError:  # installed-package layout
    import gacnet as g


def test_loss_weights_exact():
    w = g.loss_weights()
    assert w == [1.0, 0.25, 0.0625, 0.015625, 0.00390625, 0.0009765625]


def test_lr_anchors():
    assert math.isclose(g.lr_at(0, 2000, 2.5e-4, 0.10), 6.25e-6, rel_tol=0, abs_tol=1e-15)
    assert math.isclose(g.lr_at(200, 2000, 2.5e-4, 0.10), 2.5e-4, rel_tol=0, abs_tol=1e-15)
    assert math.isclose(g.lr_at(1999, 2000, 2.5e-4, 0.10), 6.25e-7, rel_tol=0, abs_tol=1e-9)


def test_normalize_affinity_rows_sum_to_one():
    raw = np.random.default_rng(0).normal(size=(8, 5, 5))
    nk = g.normalize_affinity(raw)
    total = nk.sum(axis=0)
    assert np.allclose(total, 1.0, atol=1e-12)


def test_propagate_constant_fixed_point():
    raw = np.abs(np.random.default_rng(1).normal(size=(8, 6, 6))) + 0.1
    nk = g.normalize_affinity(raw)
    d = np.full((6, 6), 3.5)
    out = g.propagate_step(d, nk, 3)
    assert np.array_equal(out, d)


def test_sparse_constraint_anchors_valid_pixels():
    d = np.random.default_rng(2).uniform(1, 10, size=(5, 5))
    s = np.zeros((5, 5))
    s[2, 3] = 7.25
    gamma = (s > 0).astype(float)
    out = g.apply_sparse_constraint(d, s, gamma)
    assert out[2, 3] == 7.25
    assert out[0, 0] == d[0, 0]


def test_metrics_against_hand_calc():
    gt = np.zeros((2, 2))
    pred = np.zeros((2, 2))
    gt[0, 0] = 4.0
    pred[0, 0] = 5.0
    m = g.compute_metrics(pred, gt)
    assert math.isclose(m["rmse_mm"], 1000.0)
    assert math.isclose(m["mae_mm"], 1000.0)
    assert math.isclose(m["irmse_per_km"], 50.0)
    assert m["inverse_defined"]


def test_scene_and_depth_png_round_trip():
    scene = g.generate_scene(seed=7, h=64, w=64, n_objects=1)
    gt = scene["gt"]
    assert gt.shape == (64, 64)
    assert (gt > 0).all()
    sparse = g.lidar_subsample(gt, 8, 0.3, 7)
    assert 0 < (sparse > 0).sum() < sparse.size
    with tempfile.TemporaryDirectory() as td:
        path = os.path.join(td, "d.png")
        g.save_depth_png(sparse, path)
        back = g.load_depth_png(path)
        q = np.floor(sparse * 256.0 + 0.5) / 256.0
        q[sparse <= 0] = 0.0
        assert np.array_equal(back, q)


def test_predict_and_checkpoint_round_trip():
    scene = g.generate_scene(seed=11, h=64, w=64, n_objects=1)
    sparse = g.lidar_subsample(scene["gt"], 8, 0.3, 11)
    net = g.GacNet(seed=5)
    pred = net.predict(scene["image"], sparse,
                       scene["fx"], scene["fy"], scene["cx"], scene["cy"])
    assert pred.shape == (64, 64)
    assert (pred >= 0).all()
    with tempfile.TemporaryDirectory() as td:
        ck = os.path.join(td, "m.ckpt")
        net.save(ck)
        net2 = g.GacNet.load(ck)
        pred2 = net2.predict(scene["image"], sparse,
                             scene["fx"], scene["fy"], scene["cx"], scene["cy"])
        assert np.array_equal(pred, pred2)


def test_train_toy_loss_decreases():
    out = g.train_toy(seed=3, n_frames=4, steps=30)
    losses = out["losses"]
    assert len(losses) == 30
    assert np.mean(losses[-5:]) < np.mean(losses[:5])
