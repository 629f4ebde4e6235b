import numpy as np
import pytest

from conftest import rel_error
from tsseg.data import TimestampAnnotation
from tsseg.errors import AnnotationError, ConfigError, ShapeError
from tsseg.losses import LossWeights, class_loss
from tsseg.numerics import finite_diff_grad, log_softmax, row_softmax
from tsseg.segmenter import (TcnConfig, dilated_residual_block, predict, tcn_backward, tcn_forward,
                             tcn_init, train_seg_epoch)
from tsseg.synthetic import SynthConfig, generate

TINY = TcnConfig(input_dim=5, num_classes=3, num_stages=1, layers_per_stage=2, num_feature_maps=4)


def test_init_deterministic():
    a, b = tcn_init(TINY, seed=5), tcn_init(TINY, seed=5)
    assert all(a[k].tobytes() == b[k].tobytes() for k in a.tensors)
    c = tcn_init(TINY, seed=6)
    assert any(not np.array_equal(a[k], c[k]) for k in a.tensors)


def test_param_count_hand_formula():
    cfg = TcnConfig(input_dim=64, num_classes=5, num_stages=2, layers_per_stage=6, num_feature_maps=64)
    # stage 1: projection 64->64 (+bias); 6 blocks of (3*64*64 + 64) + (64*64 + 64); classifier 64->5
    stage1 = (64 * 64 + 64) + 6 * ((3 * 64 * 64 + 64) + (64 * 64 + 64)) + (64 * 5 + 5)
    # stage 2 reads 5 class probabilities
    stage2 = (5 * 64 + 64) + 6 * ((3 * 64 * 64 + 64) + (64 * 64 + 64)) + (64 * 5 + 5)
    params = tcn_init(cfg, seed=0)
    assert sum(t.size for t in params.tensors.values()) == stage1 + stage2 == cfg.param_count()


def test_zero_layers_rejected():
    with pytest.raises(ConfigError):
        TcnConfig(input_dim=4, num_classes=3, layers_per_stage=0)


def naive_block(x, weights, d):
    dil_w, dil_b, pw_w, pw_b = weights
    T, F = x.shape
    out = np.zeros_like(x)
    for t in range(T):
        acc = dil_b[0].copy()
        for tap, offset in enumerate((-d, 0, d)):
            s = t + offset
            if 0 <= s < T:
                acc = acc + x[s] @ dil_w[tap * F:(tap + 1) * F]
        out[t] = x[t] + np.maximum(acc, 0) @ pw_w + pw_b[0]
    return out


@pytest.mark.parametrize("d", [1, 2, 4, 16])
def test_block_matches_naive_loop(d):
    rng = np.random.default_rng(d)
    x = rng.normal(size=(11, 4))
    w = (rng.normal(size=(12, 4)), rng.normal(size=(1, 4)), rng.normal(size=(4, 4)), rng.normal(size=(1, 4)))
    np.testing.assert_allclose(dilated_residual_block(x, w, d), naive_block(x, w, d), atol=1e-9)


def test_block_zero_weights_is_identity():
    x = np.random.default_rng(0).normal(size=(7, 4))
    w = (np.zeros((12, 4)), np.zeros((1, 4)), np.zeros((4, 4)), np.zeros((1, 4)))
    np.testing.assert_array_equal(dilated_residual_block(x, w, 2), x)


def test_block_single_frame_is_pointwise():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 4))
    w = (rng.normal(size=(12, 4)), rng.normal(size=(1, 4)), rng.normal(size=(4, 4)), rng.normal(size=(1, 4)))
    centre = x + np.maximum(x @ w[0][4:8] + w[1], 0) @ w[2] + w[3]
    np.testing.assert_allclose(dilated_residual_block(x, w, 1), centre, atol=1e-12)


def test_block_errors():
    with pytest.raises(ConfigError):
        dilated_residual_block(np.zeros((3, 4)), (np.zeros((12, 4)),) * 4, 0)
    with pytest.raises(ShapeError):
        dilated_residual_block(np.zeros((3, 5)), (np.zeros((12, 4)), 0, 0, 0), 1)


def test_forward_shapes_and_penultimate():
    cfg = TcnConfig(input_dim=64, num_classes=5)
    p = tcn_init(cfg, seed=0)
    x = np.random.default_rng(0).normal(size=(30, 64))
    tr = tcn_forward(p, x)
    assert tr.penultimate.shape == (30, 64)
    assert len(tr.stage_logits) == 2
    np.testing.assert_allclose(tr.probs.sum(axis=1), 1.0, atol=1e-9)


def test_single_stage_probs():
    p = tcn_init(TINY, seed=0)
    x = np.random.default_rng(1).normal(size=(6, 5))
    tr = tcn_forward(p, x)
    np.testing.assert_array_equal(tr.probs, row_softmax(tr.stage_logits[0]))


def test_forward_deterministic_and_checked():
    p = tcn_init(TINY, seed=0)
    x = np.random.default_rng(1).normal(size=(6, 5))
    assert tcn_forward(p, x).stage_logits[0].tobytes() == tcn_forward(p, x).stage_logits[0].tobytes()
    with pytest.raises(ShapeError):
        tcn_forward(p, np.zeros((6, 4)))


def test_zeroed_convolutions_make_blocks_identity():
    p = tcn_init(TINY, seed=0)
    for name in p.tensors:
        if ".b" in name:
            p.tensors[name][:] = 0
    x = np.random.default_rng(2).normal(size=(6, 5))
    tr = tcn_forward(p, x)
    np.testing.assert_allclose(tr.penultimate, x @ p["s0.in_w"] + p["s0.in_b"], atol=1e-12)


def test_temporal_locality():
    cfg = TcnConfig(input_dim=3, num_classes=2, num_stages=2, layers_per_stage=3, num_feature_maps=4)
    p = tcn_init(cfg, seed=1)
    for name in p.tensors:
        p.tensors[name] += 0.1  # non-zero biases so every path is live
    rng = np.random.default_rng(3)
    T, t0 = 60, 30
    x = rng.normal(size=(T, 3))
    y = x.copy()
    y[t0] += 5.0
    diff = np.abs(tcn_forward(p, x).stage_logits[-1] - tcn_forward(p, y).stage_logits[-1]).max(axis=1)
    reach = cfg.receptive_half_width()  # 2 stages * (1 + 2 + 4)
    assert reach == 14
    far = np.abs(np.arange(T) - t0) > reach
    assert np.all(diff[far] == 0.0)
    assert diff[t0 - reach] > 0 and diff[t0 + reach] > 0


def _instance(seed, cfg=TINY, T=6):
    rng = np.random.default_rng(seed)
    p = tcn_init(cfg, seed=seed)
    for name in p.tensors:
        p.tensors[name] += rng.normal(scale=0.3, size=p.tensors[name].shape)
    x = rng.normal(size=(T, cfg.input_dim))
    labels = rng.integers(0, cfg.num_classes, size=T)
    labels[rng.random(T) < 0.4] = -1
    frames = np.sort(rng.choice(T, size=3, replace=False))
    labels[frames[0]] = 0
    stamps = TimestampAnnotation(frames, rng.integers(0, cfg.num_classes, size=3))
    return p, x, labels, stamps


def _value(p, x, labels, stamps, w):
    return tcn_backward(p, x, tcn_forward(p, x), labels, stamps, w)[0]


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("stages", [1, 2])
def test_gradients_match_finite_differences(seed, stages):
    cfg = TcnConfig(input_dim=5, num_classes=3, num_stages=stages, layers_per_stage=2, num_feature_maps=4)
    p, x, labels, stamps = _instance(seed, cfg)
    w = LossWeights()
    _, grads = tcn_backward(p, x, tcn_forward(p, x), labels, stamps, w)
    names = list(p.tensors) if seed < 3 else [n for n in p.tensors if n.startswith("s0.b0") or "out" in n]
    for name in names:
        def f(v, name=name):
            q = p.copy()
            q.tensors[name] = v
            return _value(q, x, labels, stamps, w)
        assert rel_error(grads[name], finite_diff_grad(f, p[name])) <= 1e-4, name


def test_loss_reduces_to_cross_entropy():
    cfg = TcnConfig(input_dim=5, num_classes=3, num_stages=2, layers_per_stage=2, num_feature_maps=4)
    p, x, _, stamps = _instance(4, cfg)
    labels = np.array([0, 1, 2, 2, 1, 0])
    tr = tcn_forward(p, x)
    value, _ = tcn_backward(p, x, tr, labels, stamps, LossWeights(alpha=0.0, beta=0.0))
    expected = np.mean([class_loss(log_softmax(l), labels)[0] for l in tr.stage_logits])
    assert value == pytest.approx(expected, abs=1e-12)


def test_conf_term_inactive_for_peaked_predictions():
    p = tcn_init(TINY, seed=0)
    for name in p.tensors:
        p.tensors[name][:] = 0
    # route the first feature straight to class logits: class 0 peaks at frame 1, class 2 at frame 4
    p.tensors["s0.in_w"][:3, :3] = np.eye(3)
    p.tensors["s0.out_w"][:3, :3] = np.eye(3)
    x = np.zeros((6, 5))
    x[:, 0] = [2, 3, 2, 1, 0, -1]
    x[:, 2] = [-1, 0, 1, 2, 3, 2]
    stamps = TimestampAnnotation([1, 4], [0, 2])
    labels = stamps.sparse_labels(6)
    tr = tcn_forward(p, x)
    with_conf = tcn_backward(p, x, tr, labels, stamps, LossWeights(beta=0.075))[0]
    without = tcn_backward(p, x, tr, labels, stamps, LossWeights(beta=0.0))[0]
    assert with_conf == without


def test_backward_needs_labels():
    p, x, _, stamps = _instance(0)
    with pytest.raises(AnnotationError):
        tcn_backward(p, x, tcn_forward(p, x), np.full(6, -1), stamps)


def _toy_videos(seed=0, dense=True):
    ds, _ = generate(SynthConfig(num_videos=6, num_classes=3, feature_dim=8, segment_len_range=(8, 14),
                                 segments_per_video=(2, 4), seed=seed))
    out = []
    for v in ds.videos:
        y = v.gt if dense else v.timestamps.sparse_labels(v.num_frames)
        out.append((v.features.frames, y, v.timestamps))
    return out


def _toy_config():
    return TcnConfig(input_dim=8, num_classes=3, num_stages=2, layers_per_stage=3, num_feature_maps=8)


def test_training_reduces_loss():
    p = tcn_init(_toy_config(), seed=0)
    videos = _toy_videos()
    losses = [train_seg_epoch(p, videos, LossWeights(), batch_size=2) for _ in range(30)]
    assert losses[-1] < losses[0]


def test_zero_lr_freezes_parameters():
    p = tcn_init(_toy_config(), seed=0, lr=0.0)
    before = p.copy()
    train_seg_epoch(p, _toy_videos(), LossWeights())
    assert all(np.array_equal(p[k], before[k]) for k in p.tensors)


def test_training_reproducible():
    traj = []
    for _ in range(2):
        p = tcn_init(_toy_config(), seed=2)
        rng = np.random.default_rng(0)
        traj.append([train_seg_epoch(p, _toy_videos(dense=False), LossWeights(), 2, rng) for _ in range(4)])
    assert traj[0] == traj[1]


def test_predict_contract():
    p = tcn_init(TINY, seed=0)
    for name in p.tensors:
        p.tensors[name][:] = 0
    x = np.random.default_rng(0).normal(size=(7, 5))
    np.testing.assert_array_equal(predict(p, x), np.zeros(7))
    p.tensors["s0.out_b"][0] = [0.0, 0.0, 1.0]
    np.testing.assert_array_equal(predict(p, x), np.full(7, 2))
    q = tcn_init(TINY, seed=3)
    y = predict(q, x)
    assert y.shape == (7,) and y.min() >= 0 and y.max() < 3
