import numpy as np
import pytest

from surecal import models as md
from oracles import best_f1_threshold, central_difference


def test_balanced_loss_examples():
    # 0.22 * log 2 = 0.152492...
    assert md.balanced_bce_loss([1], [0.5], 0.22) == pytest.approx(0.22 * np.log(2), rel=1e-12)
    assert round(md.balanced_bce_loss([1], [0.5], 0.22), 5) == 0.15249
    assert md.balanced_bce_loss([0], [0.0], 0.9) < 1e-6
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 50)
    p = rng.uniform(0.01, 0.99, 50)
    plain = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert md.balanced_bce_loss(y, p, 0.5) == pytest.approx(0.5 * plain, rel=1e-12)


def test_balanced_loss_length_mismatch():
    with pytest.raises(ValueError):
        md.balanced_bce_loss([1, 0], [0.5], 0.5)


def test_balanced_loss_closed_form_at_half():
    y = np.array([1] * 22 + [0] * 78)
    alpha = md.class_weight(y)
    pi = y.mean()
    expected = np.log(2) * (alpha * pi + (1 - alpha) * (1 - pi))
    assert md.balanced_bce_loss(y, np.full(y.size, 0.5), alpha) == pytest.approx(expected, rel=1e-12)


def test_class_weight_modes():
    y = [1, 0, 0, 0]
    assert md.class_weight(y) == 0.25
    assert md.class_weight(y, "complement") == 0.75
    with pytest.raises(ValueError):
        md.class_weight(y, "inverse")


def test_logreg_forward_examples():
    assert md.logreg_forward(md.logreg_params([0.0, 0.0], 0.0), [3.0, -1.0]) == 0.5
    assert md.logreg_forward(md.logreg_params([1.0], 0.0), [0.0]) == 0.5
    assert md.logreg_forward(md.logreg_params([2.0], -1.0), [1.0]) == pytest.approx(0.7310585786, abs=1e-10)
    with pytest.raises(ValueError):
        md.logreg_forward(md.logreg_params([1.0], 0.0), [1.0, 2.0])


def test_ffnn_forward_zero_and_relu_cutoff():
    net = md.he_init((4, 60, 60, 60, 1), seed=1)
    for w, b in zip(net.weights, net.biases):
        w[:] = 0
        b[:] = 0
    assert md.ffnn_forward(net, [1, 2, 3, 4]) == 0.5
    one = md.Network([np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    assert md.ffnn_forward(one, [-3.0]) == 0.5


def test_ffnn_forward_hand_computed():
    w1 = np.array([[1.0, -2.0], [0.5, 1.0]])
    b1 = np.array([0.1, 0.2])
    w2 = np.array([[1.5], [-0.7]])
    b2 = np.array([0.3])
    net = md.Network([w1, w2], [b1, b2])
    x = np.array([0.4, -0.6])
    h = [max(0.0, 0.4 * 1.0 + -0.6 * 0.5 + 0.1), max(0.0, 0.4 * -2.0 + -0.6 * 1.0 + 0.2)]
    z = h[0] * 1.5 + h[1] * -0.7 + 0.3
    assert md.ffnn_forward(net, x) == pytest.approx(1 / (1 + np.exp(-z)), abs=1e-12)


def test_network_shape_checks():
    with pytest.raises(ValueError):
        md.Network([np.ones((3, 2)), np.ones((3, 1))], [np.zeros(2), np.zeros(1)])
    with pytest.raises(ValueError):
        md.Network([np.ones((3, 2))], [np.zeros(2)])


def test_he_init_variance_and_determinism():
    net = md.he_init((60, 60, 60, 60, 1), seed=3)
    assert abs(net.weights[1].var() / (2 / 60) - 1) < 0.2
    assert all(np.all(b == 0) for b in net.biases)
    again = md.he_init((60, 60, 60, 60, 1), seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(net.params(), again.params()))


def _fd_grads(net, x, y, alpha, h=1e-5):
    out = []
    for param in net.params():
        def f(v, param=param):
            saved = param.copy()
            param[...] = v
            loss = md.balanced_bce_loss(y, md.forward(net, x), alpha)
            param[...] = saved
            return loss
        out.append(central_difference(f, param.copy(), h))
    return out


@pytest.mark.parametrize("dims", [(3, 1), (3, 5, 4, 1)])
def test_backprop_matches_finite_differences(dims):
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        net = md.he_init(dims, rng=rng)
        for b in net.biases:
            b[:] = rng.normal(0, 0.3, b.shape)
        x = rng.normal(size=(5, dims[0]))
        y = rng.integers(0, 2, 5).astype(float)
        _, grads = md.backprop_gradients(net, x, y, 0.3)
        for a, n in zip(grads, _fd_grads(net, x, y, 0.3)):
            scale = np.maximum(np.abs(n), 1e-4)
            worst = max(worst, float(np.max(np.abs(a - n) / scale)))
    assert worst < 1e-5


def test_backprop_zero_at_clamped_optimum():
    net = md.logreg_params([40.0], 0.0)
    _, grads = md.backprop_gradients(net, [[1.0]], [1.0], 0.4)
    assert all(np.linalg.norm(g) < 1e-8 for g in grads)


def test_backprop_duplicate_rows_invariant():
    rng = np.random.default_rng(2)
    net = md.he_init((4, 6, 1), rng=rng)
    x = rng.normal(size=(7, 4))
    y = rng.integers(0, 2, 7)
    _, g1 = md.backprop_gradients(net, x, y, 0.2)
    _, g2 = md.backprop_gradients(net, np.vstack([x, x]), np.r_[y, y], 0.2)
    assert all(np.allclose(a, b, rtol=1e-12, atol=1e-15) for a, b in zip(g1, g2))


def test_backprop_empty_batch():
    with pytest.raises(ValueError):
        md.backprop_gradients(md.logreg_params([1.0], 0.0), np.empty((0, 1)), [], 0.5)


def test_adam_zero_gradient_is_noop():
    net = md.logreg_params([1.0, -2.0], 0.5)
    before = [a.copy() for a in net.params()]
    state = md.AdamState.zeros_like(net)
    md.adam_step(net, [np.zeros_like(a) for a in net.params()], state)
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params()))
    assert state.t == 1


def test_adam_first_step_is_signed_lr():
    net = md.logreg_params([0.0, 0.0], 0.0)
    cfg = md.TrainConfig(learning_rate=0.01, epsilon=1e-12)
    grads = [np.array([[3.0], [-0.002]]), np.array([5.0])]
    md.adam_step(net, grads, md.AdamState.zeros_like(net), cfg)
    assert np.allclose(net.weights[0].ravel(), [-0.01, 0.01], rtol=1e-8)
    assert np.allclose(net.biases[0], [-0.01], rtol=1e-8)


def test_adam_scalar_quadratic():
    net = md.logreg_params([1.0], 0.0)
    state = md.AdamState.zeros_like(net)
    cfg = md.TrainConfig(learning_rate=0.1)
    for _ in range(100):
        w = net.weights[0]
        md.adam_step(net, [2 * w, np.zeros(1)], state, cfg)
    assert abs(net.weights[0][0, 0]) < 0.05


def test_tune_threshold_examples():
    assert md.tune_threshold([0.1, 0.4, 0.6, 0.9], [0, 0, 1, 1]) == 0.4
    y = np.array([1, 0, 0, 1, 0])
    tau = md.tune_threshold(np.full(5, 0.5), y)
    assert tau == 0.0
    pi = y.mean()
    tp = int(np.sum((np.full(5, 0.5) > tau) & (y == 1)))
    assert 2 * tp / (5 + 2) == pytest.approx(2 * pi / (pi + 1))


def test_tune_threshold_inverted_probs():
    tau = md.tune_threshold([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1])
    assert tau == 0.0


def test_tune_threshold_single_class():
    with pytest.raises(ValueError):
        md.tune_threshold([0.2, 0.3], [0, 0])


def test_tune_threshold_matches_enumeration():
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        p = np.round(rng.uniform(size=n), 1)
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            continue
        assert md.tune_threshold(p, y) == best_f1_threshold(p.tolist(), y.tolist())[0]


def test_config_validation():
    with pytest.raises(ValueError):
        md.TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        md.TrainConfig(learning_rate=-1)
    with pytest.raises(ValueError):
        md.TrainConfig(alpha_mode="other")


def _separable(n=400, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    y = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(float)
    x[y == 1] += 0.3 * np.array([1.0, 0.5])
    return x, y


@pytest.mark.parametrize("kind", ["logreg", "ffnn"])
def test_train_separable_reaches_perfect_f1(kind):
    x, y = _separable()
    cfg = md.TrainConfig(learning_rate=0.05, batch_size=32, max_epochs=150, patience=150)
    model = md.train(kind, x, y, x, y, cfg)
    _, cls = md.predict(model, x, classes=True)
    tp = np.sum((cls == 1) & (y == 1))
    assert 2 * tp / (cls.sum() + y.sum()) == 1.0


def test_train_deterministic_and_best_snapshot(tmp_path):
    x, y = _separable(300, seed=1)
    xv, yv = _separable(100, seed=2)
    cfg = md.TrainConfig(max_epochs=30, patience=3, seed=4)
    a = md.train("ffnn", x, y, xv, yv, cfg)
    b = md.train("ffnn", x, y, xv, yv, cfg)
    assert a.to_dict() == b.to_dict()
    best = min(h[2] for h in a.history)
    assert md.balanced_bce_loss(yv, md.predict(a, xv), a.alpha) == pytest.approx(best, rel=1e-12)
    assert len(a.history) <= cfg.max_epochs and 0 <= a.tau <= 1


def test_model_round_trip(tmp_path):
    x, y = _separable(200)
    model = md.train("ffnn", x, y, x, y, md.TrainConfig(max_epochs=5, seed=9))
    model.save(tmp_path / "m.json")
    back = md.TrainedModel.load(tmp_path / "m.json")
    assert np.array_equal(md.predict(back, x), md.predict(model, x))
    assert back.tau == model.tau and back.config == model.config
    model.write_history(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss" and len(lines) == len(model.history) + 1


def test_predict_strict_threshold_and_empty():
    net = md.logreg_params([0.0], 0.0)
    model = md.TrainedModel(net, 0.5, 0.5, md.TrainConfig())
    p, cls = md.predict(model, [[1.0], [2.0]], classes=True)
    assert p.tolist() == [0.5, 0.5] and cls.tolist() == [0, 0]
    assert md.predict(model, np.empty((0, 1))).size == 0
    assert np.array_equal(md.predict(model, [[3.0]]), md.predict(model, [[3.0]]))


def test_unknown_architecture():
    with pytest.raises(ValueError):
        md.architecture("svm", 3)
