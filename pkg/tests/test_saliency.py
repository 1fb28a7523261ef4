import hashlib
import math

import numpy as np
import pytest

from textlines.geometry import OrientedRect
from textlines.imaging import GrayImage, ProbabilityMap
from textlines.saliency import (
    PixelNet,
    PixelNetConfig,
    corpus_loss,
    create_net,
    forward,
    load_model,
    loss_and_gradient,
    make_block_gt,
    make_centroid_gt,
    multi_scale_saliency,
    parameter_count,
    predict,
    save_model,
    train,
)


def _zero_net(stages=3, channels=(4, 6, 8)):
    cfg = PixelNetConfig(stages, channels, seed=5)
    return PixelNet(cfg, np.zeros(parameter_count(cfg)))


def _fixed_image(side=32):
    vals = (np.arange(side * side, dtype=np.uint64) * 37 % 256).astype(np.uint8)
    return GrayImage(vals.reshape(side, side))


def test_config_validation():
    with pytest.raises(ValueError):
        PixelNetConfig(0, ())
    with pytest.raises(ValueError):
        PixelNetConfig(2, (4,))
    with pytest.raises(ValueError):
        PixelNetConfig(1, (0,))
    with pytest.raises(ValueError):
        PixelNetConfig(1, (4,), learning_rate=-0.1)
    with pytest.raises(ValueError):
        PixelNetConfig(1, (4,), kernel_size=4)


def test_zero_network_outputs_half():
    rng = np.random.default_rng(0)
    img = GrayImage(rng.integers(0, 256, (32, 32), dtype=np.uint8))
    out = forward(_zero_net(), img)
    assert np.all(out.data == 0.5)


def test_forward_requires_padded_dimensions():
    img = GrayImage(np.zeros((10, 10), dtype=np.uint8))
    with pytest.raises(ValueError, match="unpadded input"):
        forward(_zero_net(), img)


def test_forward_output_strictly_inside_unit_interval():
    net = create_net(PixelNetConfig(2, (4, 4), seed=2))
    rng = np.random.default_rng(1)
    for _ in range(5):
        img = GrayImage(rng.integers(0, 256, (16, 16), dtype=np.uint8))
        p = forward(net, img).data
        assert np.all(p > 0.0) and np.all(p < 1.0)


def test_forward_determinism_regression():
    net = create_net(PixelNetConfig(3, (4, 6, 8), seed=5))
    out = forward(net, _fixed_image())
    digest = hashlib.sha256(np.round(out.data, 10).tobytes()).hexdigest()
    assert digest == "3bdddbb602af1851c0299f4a7899a1bed4c8d88634a72911fa6e36fef927ef15"


def test_constant_image_gives_constant_interior():
    net = create_net(PixelNetConfig(3, (3, 3, 3), seed=8))
    img = GrayImage(np.full((64, 64), 170, dtype=np.uint8))
    out = forward(net, img).data
    interior = out[16:-16, 16:-16]
    assert interior.max() - interior.min() < 1e-9


def test_predict_pads_and_crops():
    net = create_net(PixelNetConfig(2, (3, 3), seed=4))
    rng = np.random.default_rng(6)
    img = GrayImage(rng.integers(0, 256, (13, 21), dtype=np.uint8))
    out = predict(net, img)
    assert out.data.shape == (13, 21)
    # a size that needs no padding goes through unchanged
    img2 = GrayImage(rng.integers(0, 256, (16, 16), dtype=np.uint8))
    assert np.array_equal(predict(net, img2).data, forward(net, img2).data)


# ---------------------------------------------------------------------------
# loss and gradients


def test_zero_network_loss_is_ln2():
    img = _fixed_image(16)
    net = _zero_net(2, (4, 4))
    gt = ProbabilityMap((np.random.default_rng(3).random((16, 16)) < 0.5).astype(np.float64))
    loss, _ = loss_and_gradient(net, img, gt)
    assert abs(loss - math.log(2)) < 1e-9


def test_perfect_prediction_loss_tiny():
    cfg = PixelNetConfig(2, (4, 4), seed=1)
    params = np.zeros(parameter_count(cfg))
    params[-1] = 40.0  # final fusion bias saturates the sigmoid
    net = PixelNet(cfg, params)
    img = _fixed_image(16)
    gt = ProbabilityMap(np.ones((16, 16)))
    loss, _ = loss_and_gradient(net, img, gt)
    assert loss <= 1e-6


def test_loss_dimension_mismatch():
    net = _zero_net(2, (4, 4))
    with pytest.raises(ValueError):
        loss_and_gradient(net, _fixed_image(16), ProbabilityMap(np.zeros((8, 8))))


def test_gradient_matches_finite_differences():
    cfg = PixelNetConfig(2, (4, 4), seed=9)
    net = create_net(cfg)
    rng = np.random.default_rng(1)
    img = GrayImage(rng.integers(0, 256, (16, 16), dtype=np.uint8))
    gt = ProbabilityMap((rng.random((16, 16)) < 0.5).astype(np.float64))
    _, grad = loss_and_gradient(net, img, gt)
    eps = 1e-4
    for j in range(grad.size):  # net is small enough to sweep every coordinate
        plus = net.params.copy()
        plus[j] += eps
        minus = net.params.copy()
        minus[j] -= eps
        lp, _ = loss_and_gradient(PixelNet(cfg, plus), img, gt)
        lm, _ = loss_and_gradient(PixelNet(cfg, minus), img, gt)
        fd = (lp - lm) / (2 * eps)
        rel = abs(grad[j] - fd) / max(1e-6, abs(grad[j]), abs(fd))
        assert rel < 1e-3, f"param {j}: analytic {grad[j]}, fd {fd}"


# ---------------------------------------------------------------------------
# training


def _box_example():
    rng = np.random.default_rng(42)
    data = np.full((16, 16), 60, dtype=np.uint8)
    data[4:12, 4:12] = 200
    data = np.clip(data.astype(int) + rng.integers(-15, 16, (16, 16)), 0, 255).astype(np.uint8)
    gt = np.zeros((16, 16))
    gt[4:12, 4:12] = 1.0
    return GrayImage(data), ProbabilityMap(gt)


def test_train_zero_iterations_is_noop():
    net = create_net(PixelNetConfig(2, (4, 4), seed=3))
    out = train(net, [_box_example()], 0)
    assert np.array_equal(out.params, net.params)


def test_train_empty_corpus_rejected():
    net = create_net(PixelNetConfig(2, (4, 4), seed=3))
    with pytest.raises(ValueError):
        train(net, [], 10)


def test_train_overfits_single_example():
    cfg = PixelNetConfig(2, (4, 4), learning_rate=0.05, seed=3)
    net = create_net(cfg)
    corpus = [_box_example()]
    initial = corpus_loss(net, corpus)
    final = corpus_loss(train(net, corpus, 2000), corpus)
    assert final < 0.1 * initial


def test_train_separates_constant_pair():
    a = GrayImage(np.full((16, 16), 40, dtype=np.uint8))
    b = GrayImage(np.full((16, 16), 215, dtype=np.uint8))
    corpus = [(a, ProbabilityMap(np.zeros((16, 16)))), (b, ProbabilityMap(np.ones((16, 16))))]
    cfg = PixelNetConfig(2, (3, 3), learning_rate=0.05, seed=11)
    net = train(create_net(cfg), corpus, 1500)
    for img, gt in corpus:
        pred = forward(net, img).data > 0.5
        assert np.array_equal(pred, gt.data.astype(bool))


def test_train_zero_rates_leave_parameters_exact():
    cfg = PixelNetConfig(2, (3, 3), learning_rate=0.0, weight_decay=0.0, seed=7)
    net = create_net(cfg)
    out = train(net, [_box_example()], 50)
    assert np.array_equal(out.params, net.params)


def test_train_logs_every_hundred_iterations():
    seen = []
    net = create_net(PixelNetConfig(1, (2,), learning_rate=0.01, seed=1))
    train(net, [_box_example()], 250, log_fn=lambda step, loss: seen.append(step))
    assert seen == [100, 200]


# ---------------------------------------------------------------------------
# ground-truth maps


def test_block_gt_empty_and_full():
    assert np.all(make_block_gt((8, 6), []).data == 0)
    full = OrientedRect((3.5, 2.5), (100.0, 100.0), 0.0)
    assert np.all(make_block_gt((8, 6), [full]).data == 1)


def test_block_gt_rotated_square_area_matches_sampling():
    # off-lattice center: a 45-degree square centered on integer coordinates
    # aligns its edges with rows of pixel centers and biases the count
    box = OrientedRect((31.1, 31.25), (22.0, 22.0), math.pi / 4)
    gt = make_block_gt((64, 64), [box])
    count = gt.data.sum()
    rng = np.random.default_rng(17)
    pts = rng.uniform(-0.5, 63.5, size=(2_000_000, 2))
    mc = box.contains_points(pts).mean() * 64.0 * 64.0
    assert abs(count - mc) / mc < 0.02


def test_block_gt_monotone_in_boxes():
    a = OrientedRect((5.0, 5.0), (4.0, 2.0), 0.4)
    b = OrientedRect((10.0, 8.0), (6.0, 3.0), -0.7)
    one = make_block_gt((16, 16), [a]).data
    two = make_block_gt((16, 16), [a, b]).data
    assert np.all(two >= one)


def test_centroid_gt_exact_disk():
    gt = make_centroid_gt((40, 40), [((20.0, 20.0), 10.0)])
    on = {(int(x), int(y)) for y, x in zip(*np.nonzero(gt.data))}
    expected = {
        (x, y)
        for x in range(40)
        for y in range(40)
        if math.hypot(x - 20.0, y - 20.0) < 1.5
    }
    assert on == expected
    assert len(on) == 9


def test_centroid_gt_union_is_binary():
    gt = make_centroid_gt((30, 30), [((10.0, 10.0), 20.0), ((12.0, 10.0), 20.0)])
    assert set(np.unique(gt.data)) <= {0.0, 1.0}
    solo = make_centroid_gt((30, 30), [((10.0, 10.0), 20.0)])
    assert np.all(gt.data >= solo.data)


def test_centroid_gt_rejects_bad_height():
    with pytest.raises(ValueError):
        make_centroid_gt((10, 10), [((5.0, 5.0), 0.0)])


def test_centroid_gt_empty():
    assert np.all(make_centroid_gt((7, 7), []).data == 0)


# ---------------------------------------------------------------------------
# multi-scale fusion


def test_multi_scale_single_native_height_matches_forward():
    net = create_net(PixelNetConfig(2, (3, 3), seed=6))
    img = _fixed_image(16)
    fused = multi_scale_saliency(net, img, [16])
    assert np.allclose(fused.data, forward(net, img).data)


def test_multi_scale_duplicate_heights_idempotent():
    net = create_net(PixelNetConfig(2, (3, 3), seed=6))
    img = _fixed_image(16)
    once = multi_scale_saliency(net, img, [24])
    twice = multi_scale_saliency(net, img, [24, 24])
    assert np.allclose(once.data, twice.data)


def test_multi_scale_constant_image():
    net = create_net(PixelNetConfig(2, (3, 3), seed=6))
    img = GrayImage(np.full((48, 48), 90, dtype=np.uint8))
    fused = multi_scale_saliency(net, img, [24, 48, 96]).data
    interior = fused[12:-12, 12:-12]
    assert interior.max() - interior.min() < 1e-6


def test_multi_scale_empty_heights():
    net = create_net(PixelNetConfig(2, (3, 3), seed=6))
    with pytest.raises(ValueError):
        multi_scale_saliency(net, _fixed_image(16), [])


# ---------------------------------------------------------------------------
# model file


def test_model_round_trip(tmp_path):
    cfg = PixelNetConfig(3, (4, 6, 8), learning_rate=0.02, momentum=0.85, weight_decay=1e-3, seed=12)
    net = create_net(cfg)
    path = tmp_path / "net.bin"
    save_model(net, path)
    back = load_model(path)
    assert back.config == cfg
    assert np.array_equal(back.params, net.params)


def test_model_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTNET" + b"\x00" * 64)
    with pytest.raises(ValueError):
        load_model(path)


def test_model_truncated(tmp_path):
    net = create_net(PixelNetConfig(1, (2,), seed=0))
    path = tmp_path / "net.bin"
    save_model(net, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(ValueError):
        load_model(path)


def test_parameter_views_have_expected_shapes():
    cfg = PixelNetConfig(2, (3, 5), seed=0)
    net = create_net(cfg)
    assert net.view("conv_w0").shape == (3, 1, 3, 3)
    assert net.view("conv_w1").shape == (5, 3, 3, 3)
    assert net.view("side_w1").shape == (5,)
    assert net.view("fuse_w").shape == (2,)
    total = sum(np.prod(s) for _, s, _ in __import__("textlines.saliency", fromlist=["_layout"])._layout(cfg))
    assert parameter_count(cfg) == total == net.params.size
